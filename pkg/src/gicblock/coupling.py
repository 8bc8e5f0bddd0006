"""Induced line voltages from a uniform geoelectric field.

Lines are straight segments between their substations, projected with an
equirectangular approximation. Within one network every line uses the same
reference latitude for the east-west scale, so the projection is a single
linear map and induced voltages sum to zero around any closed loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .dcnet import with_induced
from .errors import CouplingError

EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class LineDisplacement:
    northward_km: float
    eastward_km: float

    def __neg__(self):
        return LineDisplacement(-self.northward_km, -self.eastward_km)


def displacement(sub_from, sub_to, ref_lat=None):
    """Northward/eastward km; the east scale uses ``ref_lat`` (deg), default the endpoints' mean."""
    lat0, lat1 = math.radians(sub_from.latitude), math.radians(sub_to.latitude)
    dlon = math.radians(sub_to.longitude - sub_from.longitude)
    ref = 0.5 * (lat0 + lat1) if ref_lat is None else math.radians(ref_lat)
    north = EARTH_RADIUS_KM * (lat1 - lat0)
    east = EARTH_RADIUS_KM * dlon * math.cos(ref)
    return LineDisplacement(north, east)


def reference_latitude(net):
    """Mean latitude over the substations at line ends (deg)."""
    lats = {s.id: s.latitude for ends in net.line_ends.values() for s in ends
            if s is not None and s.latitude is not None}
    return sum(lats.values()) / len(lats) if lats else 0.0


def induced_voltage(field, d):
    """Volts along the displacement ``d``: field (V/km) dotted with the line (km)."""
    theta = math.radians(field.direction)
    return field.magnitude * (math.cos(theta) * d.northward_km + math.sin(theta) * d.eastward_km)


def apply_field(net, field):
    """Return ``net`` with induced voltages on line edges; winding edges get 0 V."""
    ref = reference_latitude(net)
    out = []
    for e in net.edges:
        if e.kind != "line":
            out.append(0.0)
            continue
        s0, s1 = net.line_ends.get(e.id, (None, None))
        coords = (None, None, None, None) if s0 is None or s1 is None else (
            s0.latitude, s0.longitude, s1.latitude, s1.longitude)
        if any(v is None or not math.isfinite(v) for v in coords):
            raise CouplingError(f"branch {e.ac_link}: endpoint substation has no coordinates")
        out.append(induced_voltage(field, displacement(s0, s1, ref)))
    return with_induced(net, out)
