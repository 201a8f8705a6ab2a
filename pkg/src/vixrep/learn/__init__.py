"""Regressors that learn the index from option-price features."""

from .data import (EVERY_THIRD, IN_ORDER, Dataset, MinMaxScaler, build_features, kfold,
                   make_windows, minmax_apply, minmax_fit, split_random)
from .layers import LSTM, Dense, Dropout, Sequential, dense_param_count, lstm_param_count
from .model import (Model, dense_train, evaluate, holdout_split, lstm_train, predict,
                    train_forest, train_tree)
from .nets import (AdamState, NetworkSpec, TrainConfig, TrainingError, adam_step,
                   build_network, fit, lstm_flat_spec, lstm_multi_spec, model1_spec,
                   model2_spec)
from .tree import RandomForest, RegressionTree, forest_fit, tree_fit
