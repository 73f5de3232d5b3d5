from .base import (DEFAULT_GRIDS, DEFAULTS, FAMILIES, LINKS, ModelSpec, TrainedModel, predict,
                   predict_proba, proba_from_matrix, threshold_predictions, train,
                   validate_hyperparameters)
from .persistence import load_model, model_from_dict, model_to_dict, save_model
from .search import CVResult, expand_grid, fold_indices, grid_search_cv

__all__ = [
    "DEFAULT_GRIDS", "DEFAULTS", "FAMILIES", "LINKS", "ModelSpec", "TrainedModel", "predict",
    "predict_proba", "proba_from_matrix", "threshold_predictions", "train",
    "validate_hyperparameters", "load_model", "model_from_dict", "model_to_dict", "save_model",
    "CVResult", "expand_grid", "fold_indices", "grid_search_cv",
]
