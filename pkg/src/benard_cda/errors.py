"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid grid, parameter, policy or config-file content."""

    def __init__(self, message, *, key=None, line=None):
        self.key = key
        self.line = line
        self.detail = message
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class CompatibilityError(ValueError):
    """Right-hand side of a pure-Neumann Poisson problem has a nonzero mean."""

    def __init__(self, mean, scale):
        self.mean = mean
        self.scale = scale
        super().__init__(
            f"incompatible Poisson rhs: mean {mean:.3e} exceeds 1e-8 * max|rhs| = {1e-8 * scale:.3e}"
        )


class BlowUpError(RuntimeError):
    """Non-finite values appeared during time integration."""

    def __init__(self, stage, step, scenario=None):
        self.stage = stage
        self.step = step
        self.scenario = scenario
        msg = f"non-finite values after stage '{stage}' at step {step}"
        if scenario:
            msg = f"[{scenario}] " + msg
        super().__init__(msg)
