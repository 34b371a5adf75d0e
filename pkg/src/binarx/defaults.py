"""Package-wide default constants and the reference model specification."""

# Master seed used whenever a config or caller does not supply one.
DEFAULT_SEED = 20170

# Burn-in length used to wash out the arbitrary X0 ~ Bin(n, 1/2) start.
DEFAULT_BURN_IN = 500

# Compact box for coefficient vectors; fits must stay in its interior.
PARAM_BOX_BOUND = 20.0


def default_model_spec():
    """The toolkit's reference data-generating process.

    Binomial total 10, coefficients (-1, 0.1, 0.4), one exogenous covariate
    drawn i.i.d. N(1, sd=0.1) and clamped to [0, 10].  Used as the default
    by the experiment harnesses and the CLI when no model is configured.
    """
    from .model import ExogenousSpec, ModelSpec, ParamVector

    return ModelSpec(
        n=10,
        beta=ParamVector(phi0=-1.0, phi1=0.1, gamma_exo=(0.4,)),
        exo=ExogenousSpec(dist="normal", mean=1.0, sd=0.1, clamp_lo=0.0, clamp_hi=10.0, l=1),
    )
