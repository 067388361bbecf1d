"""Contextual bandits with uninformed feedback graphs."""
from .algorithms import Learner, LearnerConfig, run
from .dec import DecProblem, closed_form_bidding_policy, dec_value, inner_max, minimize_dec
from .environments import BiddingEnvironment, GenericGraphEnvironment, generate_synthetic, load_auction_csv
from .graphs import BidGrid, FeedbackGraph, GraphModel, build_bidding_graph

__version__ = "0.1.0"

__all__ = [
    "BidGrid", "BiddingEnvironment", "DecProblem", "FeedbackGraph", "GenericGraphEnvironment", "GraphModel",
    "Learner", "LearnerConfig", "build_bidding_graph", "closed_form_bidding_policy", "dec_value",
    "generate_synthetic", "inner_max", "load_auction_csv", "minimize_dec", "run",
]
