"""Complex Monge-Ampere measures of a maximum of smooth functions."""
from .forms import DifferentialForm, DerivativeJet, wedge
from .ma import PairingResult, SamplingPlan, equilibrium_pair, pair, stratum_density, useful_fact_check
from .oracle import QuadraturePlan, bt_inductive_pair, direct_pair, epsilon_sweep
from .scene import PolyhedronSpec, Scene, green_candidate, load_polyhedron, load_scene
from .strata import sample_stratum

__version__ = "0.1.0"
