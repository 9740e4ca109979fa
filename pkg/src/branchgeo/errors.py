"""Exception hierarchy with machine-readable codes and CLI exit statuses."""

INVALID_INPUT = 2
CHECK_FAILURE = 1
NUMERICAL_FAILURE = 3


class BranchGeoError(Exception):
    code = "error"
    exit_status = NUMERICAL_FAILURE

    def __init__(self, message="", **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self):
        out = {"error": self.code, "message": self.message}
        if self.details:
            out["details"] = self.details
        return out


def _make(name, code, status, doc):
    cls = type(name, (BranchGeoError,), {"code": code, "exit_status": status, "__doc__": doc})
    return cls


# jets
ZeroOrderJet = _make("ZeroOrderJet", "zero_order_jet", INVALID_INPUT, "Derivative of an order-0 jet.")
OrderTooLow = _make("OrderTooLow", "order_too_low", INVALID_INPUT, "Jet order below what the query needs.")
NotDivisible = _make("NotDivisible", "not_divisible", CHECK_FAILURE, "Jet is not divisible by the requested power of z.")
NonExtendable = _make("NonExtendable", "non_extendable", CHECK_FAILURE, "Quotient has no smooth extension at 0.")
# fields
GridTooCoarse = _make("GridTooCoarse", "grid_too_coarse", INVALID_INPUT, "Grid below the minimum resolution.")
NotClosedForm = _make("NotClosedForm", "not_closed_form", NUMERICAL_FAILURE, "Line integral depends on the path.")
SolverDiverged = _make("SolverDiverged", "solver_diverged", NUMERICAL_FAILURE, "Poisson solve residual too large.")
IllConditionedFit = _make("IllConditionedFit", "ill_conditioned_fit", NUMERICAL_FAILURE, "Jet fit least squares is ill conditioned.")
# builder
ConstraintViolated = _make("ConstraintViolated", "constraint_violated", INVALID_INPUT, "Representation data violates the origin constraint.")
BuildRejected = _make("BuildRejected", "build_rejected", CHECK_FAILURE, "No admissible radius found for the built map.")
NotDiffeoGerm = _make("NotDiffeoGerm", "not_diffeo_germ", INVALID_INPUT, "Reparametrization is not a diffeomorphism germ.")
# branch
NotABranchPoint = _make("NotABranchPoint", "not_a_branch_point", CHECK_FAILURE, "Jet does not satisfy the branch criterion.")
AmbientFrameMismatch = _make("AmbientFrameMismatch", "ambient_frame_mismatch", CHECK_FAILURE, "Leading jet is a rotated canonical vector.")
NonRealL = _make("NonRealL", "non_real_l", CHECK_FAILURE, "Mixed second derivative is not real.")
QuasiBoundViolated = _make("QuasiBoundViolated", "quasi_bound_violated", CHECK_FAILURE, "Quasiregularity bound fails on the grid.")
NotConformal = _make("NotConformal", "not_conformal", CHECK_FAILURE, "Map is not conformal.")
# normalize
RootBranchAmbiguous = _make("RootBranchAmbiguous", "root_branch_ambiguous", NUMERICAL_FAILURE, "Root lifting is not single valued.")
NewtonDiverged = _make("NewtonDiverged", "newton_diverged", NUMERICAL_FAILURE, "Inverse map iteration failed.")
# geometry
ShapeMismatch = _make("ShapeMismatch", "shape_mismatch", INVALID_INPUT, "Incompatible array shapes.")
RankDeficient = _make("RankDeficient", "rank_deficient", NUMERICAL_FAILURE, "Frame lost rank.")
DenominatorVanishing = _make("DenominatorVanishing", "denominator_vanishing", NUMERICAL_FAILURE, "Principal block is singular.")
MetricDegenerate = _make("MetricDegenerate", "metric_degenerate", NUMERICAL_FAILURE, "Metric is not positive definite.")
SingularNode = _make("SingularNode", "singular_node", NUMERICAL_FAILURE, "Node lies on the singular set.")
# cli
ConfigError = _make("ConfigError", "config_error", INVALID_INPUT, "Configuration file is invalid.")
