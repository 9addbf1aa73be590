from .gnb import GaussianNaiveBayes
from .hoeffding import HatcConfig, HoeffdingAdaptiveTree
from .forest import ArfcConfig, AdaptiveRandomForest
from .kmeans import KMeansConfig, OnlineKMeans

__all__ = [
    "GaussianNaiveBayes",
    "HatcConfig",
    "HoeffdingAdaptiveTree",
    "ArfcConfig",
    "AdaptiveRandomForest",
    "KMeansConfig",
    "OnlineKMeans",
]
