"""Neighborhood quality, helper sets and token routing in a simulated hybrid network."""

__version__ = "0.1.0"

from .graph import WeightedGraph, generate, parse_edge_list, build_from_edge_list, to_edge_list, exact_distances
from .sim import SimConfig, Network, ExecutionTrace, CapacityViolation, aggregate, broadcast_set
from .nq import NQReport, nq_oracle, nq_node_oracle, nq_distributed
from .clustering import ruling_set, cluster_nearest_ruler, build_helper_sets, verify_helpers
from .kwise import HashFamilySpec, HashSeed, KWiseHash, sample_seed, eval_hash
from .routing import RoutingPlan, DeliveryReport, plan, route_tokens
from .pipeline import SPInstance, solve_k_ell_sp, sssp_exact_reference, skeleton_build, stretch_of
from .lower_bound import (RootedTree, HardInstance, splitting_node, build_hard_instance, encode_sources,
                          decode_from_distances, lb_value, audit_information_flow)
