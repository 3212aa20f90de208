"""Built-in worked example: constants, certificates and controllers."""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "PaperConstants",
    "paper_constants",
    "PAPER_V_ELL",
    "PAPER_V_ELL_TILDE",
    "PAPER_A",
    "PAPER_C",
    "PAPER_X0",
    "PAPER_Q0",
    "PAPER_SWITCH_TIME",
    "certificate_text",
    "local_text",
    "paper_certificate",
    "paper_local",
    "global_closed_form_text",
]

PAPER_V_ELL = 0.1042
PAPER_V_ELL_TILDE = 0.05
PAPER_A = 10.0
PAPER_C = 10.0
PAPER_X0 = (0.5, 0.1)
PAPER_Q0 = 1
PAPER_SWITCH_TIME = 0.5314


@dataclass(frozen=True)
class PaperConstants:
    theta: float
    rho: float
    c1: float
    epsilon: float
    M: float
    k1: float
    k2: float


def paper_constants(theta: float = 1e-3, rho: float = 2.0) -> PaperConstants:
    """Constants of the worked example as functions of ``theta`` and ``rho``."""
    c1 = (2.0 + rho) * theta / 2.0 + 1.0
    epsilon = 1.0 - theta * (2.0 + rho) / (2.0 * c1)
    M = theta / (2.0 * rho * (2.0 * c1 - theta * (2.0 + rho)))
    k1 = -5.0 - theta
    k2 = -3.0 + 3.0 * theta + theta * theta
    return PaperConstants(theta, rho, c1, epsilon, M, k1, k2)


def certificate_text(theta: float = 1e-3, rho: float = 2.0) -> dict:
    pc = paper_constants(theta, rho)
    return {
        "V1": "x1^2/2",
        "phi1": "-(1 + c1)*x1 - theta*x1^2",
        "alpha": "2*c1*s",
        "Psi": "theta*(1 + abs(x1))",
        "epsilon": pc.epsilon,
        "M": pc.M,
        "params": {"theta": theta, "c1": pc.c1},
    }


def local_text(theta: float = 1e-3, v_ell: float = PAPER_V_ELL,
               v_ell_tilde: float = PAPER_V_ELL_TILDE) -> dict:
    pc = paper_constants(theta)
    return {
        "V_ell": "(x1 - theta*x2)^2/2 + (2*x1 + (1 - 2*theta)*x2)^2/2",
        "phi_ell": "k1*x1 + k2*x2",
        "v_ell": v_ell,
        "v_ell_tilde": v_ell_tilde,
        "params": {"theta": theta, "k1": pc.k1, "k2": pc.k2},
    }


def paper_certificate(theta: float = 1e-3, rho: float = 2.0):
    from .backstepping import BacksteppingCertificate

    t = certificate_text(theta, rho)
    return BacksteppingCertificate.from_strings(
        2, t["V1"], t["phi1"], t["alpha"], t["Psi"], t["epsilon"], t["M"], t["params"]
    )


def paper_local(theta: float = 1e-3, v_ell: float = PAPER_V_ELL):
    from .hysteresis import LocalCertificate

    t = local_text(theta, v_ell)
    return LocalCertificate.from_strings(2, t["V_ell"], t["phi_ell"], t["v_ell"], t["params"])


def global_closed_form_text(theta: float, c1: float, k: float, c: float, variant: str = "derived") -> str:
    """Closed-form global feedback of the worked example as an expression string."""
    r = repr
    phi1 = f"(-(1 + {r(c1)})*x1 - {r(theta)}*x1^2)"
    if variant == "derived":
        slope = f"abs(1 + {r(c1)} + 2*{r(theta)}*x1)"
    else:
        slope = f"abs((1 + {r(c1)})*x1 + {r(theta)}*x1^2)"
    delta = f"(abs(x1)*{r(theta)}*(1 + abs(x1)) + {r(theta)}*(1 + abs(x1))*{r(k)}*(1 + {slope}))"
    if variant == "derived":
        tu = f"(x2 - {phi1})*(-{r(c)} - {r(c)}/4*{delta}^2)"
        tail = f" - x1/{r(k)}"
    else:
        tu = f"(x1 - {phi1})*(-{r(c)} - {r(c)}/4*{delta}^2)"
        tail = f" + x1/(2*{r(k)})"
    return f"{tu}/{r(k)} - (1 + {r(c1)} + 2*{r(theta)}*x1)*(x1 + {r(theta)}*x1^2 + x2){tail}"

