"""Parametric disjunctive inequalities for families of perturbed MILPs."""
from .cglp import Bundle, DeterminingBases, FarkasCertificate, generate_cut, verify_certificate
from .disjunction import Disjunction, Term, build_partial_bnb_disjunction, disjunctive_bound, feasible_terms
from .model import EPS_EQ, EPS_FEAS, Cut, Instance, load_instance, save_instance, validate_instance
from .pdi import check_support, farkas_pdi, is_induced, reparameterize_term, strong_pdi
from .perturb import PerturbationSpec, find_degree, find_perturbation, make_test_set
from .simplex import LpSolution, solve_lp

__version__ = "0.1.0"
