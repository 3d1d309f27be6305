"""Model selection: family, size preset, device, covariate handling."""

from __future__ import annotations

from dataclasses import dataclass

FAMILIES = (
    "chronos-bolt",
    "chronos-2",
    "moirai",
    "timesfm",
    "stub-persistence",
    "stub-noisy-persistence",
)

# How each family can consume covariates.  chronos-2 and moirai take them
# natively (extra input channels); timesfm gets a residual-linear wrapper;
# chronos-bolt is served target-only (the engine side owns any wrapping).
# Stubs accept any mode so the full protocol surface is testable without
# model downloads.
ALLOWED_COVARIATE_MODES = {
    "chronos-bolt": ("none",),
    "chronos-2": ("native",),
    "moirai": ("native",),
    "timesfm": ("residual-linear", "none"),
    "stub-persistence": ("none", "residual-linear"),
    "stub-noisy-persistence": ("none", "residual-linear"),
}

DEFAULT_SIZES = {
    "chronos-bolt": "tiny",
    "chronos-2": "base",
    "moirai": "small",
    "timesfm": "200m",
    "stub-persistence": "-",
    "stub-noisy-persistence": "-",
}


class BridgeError(RuntimeError):
    pass


@dataclass(frozen=True)
class BridgeModelSpec:
    family: str
    size: str = ""
    device: str = "cpu"
    covariate_mode: str = ""
    seed: int = 0
    sample_paths: int = 256  # budget for sample-based quantile extraction

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise BridgeError(f"unknown model family {self.family!r}; pick one of {FAMILIES}")
        if not self.size:
            object.__setattr__(self, "size", DEFAULT_SIZES[self.family])
        if not self.covariate_mode:
            object.__setattr__(self, "covariate_mode", ALLOWED_COVARIATE_MODES[self.family][0])
        allowed = ALLOWED_COVARIATE_MODES[self.family]
        if self.covariate_mode not in allowed:
            raise BridgeError(
                f"covariate_mode {self.covariate_mode!r} not supported by {self.family}; "
                f"allowed: {allowed}"
            )
        if self.sample_paths < 1:
            raise BridgeError("sample_paths must be positive")

    @property
    def name(self) -> str:
        return f"{self.family}-{self.size}" if self.size != "-" else self.family

    @property
    def supports_covariates(self) -> bool:
        return self.covariate_mode in ("native", "residual-linear")
