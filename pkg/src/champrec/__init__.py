"""Champion recommendations from mastery points via an unbiased SVD model."""

from .data import (ApiConfig, ChampionCatalog, SynthConfig, generate_synthetic, load_catalog, load_csv,
                   save_csv, skewed_config, two_archetype_config)
from .evaluation import (HyperGrid, grid_search, hit_rate_at_k, histogram, kfold_cv, normal_sf,
                         popularity_share, rmse, z_test_one_sided)
from .ratings import Dataset, MasteryRecord, RatingTriple, build_training_set, dataset_stats, normalize_user
from .recommender import QueryProfile, RecommendationList, format_recommendations, recommend, top_champions
from .slopeone import SlopeOneModel, predict_slope_one, train_slope_one
from .svd import FactorModel, Hyperparams, fold_in, load_model, predict, preset, save_model, train

__version__ = "0.1.0"
