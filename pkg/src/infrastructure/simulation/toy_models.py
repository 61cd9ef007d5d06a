"""
Analytical stand-ins for three calcite-precipitation column models.

All three map an effective urease activity ``a`` to two profiles on the output grid:

    calcite(x, t) = CAPACITY * (1 - exp(-CALCITE_RATE * a * exp(-x / PENETRATION) * t / T_END))   [% vol]
    calcium(x, t) = INJECTED * exp(-CALCIUM_RATE * a * (x / L) * (0.5 + 0.5 * t / T_END))        [mol/m3]

x is the space label in cm, t the time label in hours. With normalized parameters
a1 = ca1 / 1e-7, a2 = ca2 / 1e-6, r = rho_f / 15, k = k_ub / 5e-4:

    toy-fc (4 parameters): a = r * k * (1 + ATTACHMENT_GAIN * (a1 + a2) / 2)
    toy-ib (2 parameters): a = r * k
    toy-sc (4 parameters): a = SC_BASE + SC_SPREAD * (a1 + a2 + r + k) / 4

toy-ib is toy-fc without attachment; they agree where ca1 and ca2 sit at the low
end of their ranges. toy-sc lumps everything into an almost fixed rate.
"""
import math

import numpy as np

CALCITE = "calcite_content"
CALCIUM = "calcium_concentration"
QUANTITIES = (CALCITE, CALCIUM)

COLUMN_LENGTH_CM = 61.0
EXPERIMENT_END_H = 890.0
CAPACITY = 10.0
INJECTED = 1000.0
CALCITE_RATE = 2.0
CALCIUM_RATE = 4.0
PENETRATION_CM = 45.0

ATTACHMENT_GAIN = 0.3
SC_BASE = 0.35
SC_SPREAD = 0.05

PARAMETER_SCALES = {"ca1": 1e-7, "ca2": 1e-6, "rho_f": 15.0, "k_ub": 5e-4}


def _normalized(parameters, name):
    return parameters[name] / PARAMETER_SCALES[name]


def fc_activity(parameters):
    urease = _normalized(parameters, "rho_f") * _normalized(parameters, "k_ub")
    attachment = 0.5 * (_normalized(parameters, "ca1") + _normalized(parameters, "ca2"))
    return urease * (1.0 + ATTACHMENT_GAIN * attachment)


def ib_activity(parameters):
    return _normalized(parameters, "rho_f") * _normalized(parameters, "k_ub")


def sc_activity(parameters):
    mean = sum(_normalized(parameters, n) for n in ("ca1", "ca2", "rho_f", "k_ub")) / 4.0
    return SC_BASE + SC_SPREAD * mean


TOY_MODELS = {
    "toy-fc": (fc_activity, ("ca1", "ca2", "rho_f", "k_ub")),
    "toy-ib": (ib_activity, ("rho_f", "k_ub")),
    "toy-sc": (sc_activity, ("ca1", "ca2", "rho_f", "k_ub")),
}


def required_parameters(name):
    return TOY_MODELS[name][1]


def profiles(activity, grid):
    """Calcite and calcium values of every grid coordinate for one activity."""
    values = np.empty(grid.size)
    for i, coord in enumerate(grid.coordinates):
        x = float(coord.space)
        t = float(coord.time)
        if coord.quantity == CALCITE:
            exposure = CALCITE_RATE * activity * math.exp(-x / PENETRATION_CM) * t / EXPERIMENT_END_H
            values[i] = CAPACITY * (1.0 - math.exp(-exposure))
        elif coord.quantity == CALCIUM:
            travel = (x / COLUMN_LENGTH_CM) * (0.5 + 0.5 * t / EXPERIMENT_END_H)
            values[i] = INJECTED * math.exp(-CALCIUM_RATE * activity * travel)
        else:
            raise ValueError(f"Toy models do not produce quantity '{coord.quantity}'.")
    return values


def evaluate_toy(name, parameters, grid):
    """
    Args:
        name: one of TOY_MODELS.
        parameters: mapping parameter name -> value (extra names are ignored).
        grid: OutputGrid with numeric space (cm) and time (h) labels.
    """
    if name not in TOY_MODELS:
        raise ValueError(f"Unknown toy model '{name}'. Known: {sorted(TOY_MODELS)}")
    activity, names = TOY_MODELS[name]
    missing = [n for n in names if n not in parameters]
    if missing:
        raise ValueError(f"Toy model '{name}' needs parameters {missing}.")
    return profiles(activity(parameters), grid)
