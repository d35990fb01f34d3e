"""Histogram decision trees and GBDT with parallel split finding (PV-Tree
voting, data-parallel, attribute-parallel) on a byte-metered simulated cluster."""
from .core import (BinMapper, BinnedDataset, Histogram, HistogramBin, RawDataset,
                   SplitCandidate, Task, TreeModel, bin_dataset, compute_bin_mapper,
                   construct_histograms, predict)
from .gain import GainKind, NodeStats, find_best_split, find_best_split_for_attribute, split_gain
from .trainer import SequentialFinder, TreeConfig, build_tree
from .cluster import SimulatedCluster, WireSize, partition, partition_attributes
from .strategies import (AttributeParallelFinder, DataParallelFinder, PVTreeConfig, PVTreeFinder,
                         QuantizeConfig, QuantizedDataParallelFinder, StrategyConfig,
                         global_vote, local_vote, make_finder, quantize_histogram)
from .boosting import BoostConfig, Ensemble, Loss, TrainReport, train_gbdt

__version__ = "0.1.0"
