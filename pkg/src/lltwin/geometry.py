"""Apparatus geometry and the dispenser line-of-sight occlusion check.

Coordinates: +z is vertical (up), the science-chamber geometric center is
the origin. All lengths in meters; dimensions specified in inches in the
config are converted with 1 in = 0.0254 m.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import INCH


class GeometryError(ValueError):
    """Invalid geometric input (degenerate occluder, zero-length ray, ...)."""


def m_from_in(inches: float) -> float:
    return inches * INCH


def in_from_m(meters: float) -> float:
    return meters / INCH


@dataclass(frozen=True)
class Rectangle:
    """Planar rectangle given by center and two orthogonal half-edge vectors."""

    center: np.ndarray
    half_u: np.ndarray
    half_v: np.ndarray

    def validate(self, tol: float = 1e-9) -> None:
        lu = float(np.linalg.norm(self.half_u))
        lv = float(np.linalg.norm(self.half_v))
        if lu <= tol or lv <= tol:
            raise GeometryError("degenerate occluder: zero-area rectangle")
        if abs(float(np.dot(self.half_u, self.half_v))) > tol * lu * lv * 10.0:
            raise GeometryError("occluder edges must be orthogonal")

    @property
    def normal(self) -> np.ndarray:
        n = np.cross(self.half_u, self.half_v)
        return n / np.linalg.norm(n)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box (center and full edge lengths)."""

    center: np.ndarray
    size: np.ndarray


def line_of_sight(source, target, occluders, tol: float = 1e-9) -> bool:
    """True iff the open segment from source to target misses every occluder.

    The segment-plane intersection is tested with a metric tolerance of
    ``tol`` (meters): crossings closer than tol to either endpoint do not
    count, and in-plane (grazing) segments do not occlude.
    """
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    d = target - source
    length = float(np.linalg.norm(d))
    if length <= tol:
        raise GeometryError("source and target must be distinct")
    for rect in occluders:
        rect.validate(tol)
        n = rect.normal
        denom = float(np.dot(n, d))
        if abs(denom) < tol * length:
            continue  # parallel or grazing
        s = float(np.dot(n, rect.center - source)) / denom
        if not (tol < s * length < length - tol):
            continue  # crossing outside the open segment
        hit = source + s * d - rect.center
        lu = float(np.linalg.norm(rect.half_u))
        lv = float(np.linalg.norm(rect.half_v))
        pu = float(np.dot(hit, rect.half_u)) / lu
        pv = float(np.dot(hit, rect.half_v)) / lv
        if abs(pu) <= lu + tol and abs(pv) <= lv + tol:
            return False
    return True


@dataclass(frozen=True)
class ApparatusGeometry:
    """Fixed geometry of the two-chamber apparatus (meters)."""

    chamber_center: np.ndarray
    mot_position: np.ndarray
    transport_distance: float
    translator_throw: float
    cavity_envelope: Box
    carrier_plate: Rectangle
    dispenser_positions: list = field(default_factory=list)
    feedthrough_pin_count: int = 40

    def validate(self) -> None:
        drop = self.chamber_center[2] - self.mot_position[2]
        if abs(drop - m_from_in(2.0)) > 1e-12:
            raise GeometryError("MOT must sit 2 in below the chamber center")
        lift = float(np.linalg.norm(self.cavity_envelope.center - self.mot_position))
        if abs(lift - self.transport_distance) > 1e-12:
            raise GeometryError("transport distance must match MOT-to-cavity-center")
        if self.feedthrough_pin_count != 40:
            raise GeometryError("feedthrough pin count is fixed at 40")

    def dispenser_sees_mot(self, index: int) -> bool:
        return line_of_sight(
            self.dispenser_positions[index], self.mot_position, [self.carrier_plate]
        )

    def dispenser_sees_cavity(self, index: int) -> bool:
        return line_of_sight(
            self.dispenser_positions[index],
            self.cavity_envelope.center,
            [self.carrier_plate],
        )


def default_geometry() -> ApparatusGeometry:
    """Geometry defaults.

    Dispenser positions and the carrier-plate height are plausible
    placements (recorded in the config), not measured dimensions.
    """
    center = np.zeros(3)
    mot = np.array([0.0, 0.0, -m_from_in(2.0)])
    cavity = Box(
        center=np.array([0.0, 0.0, m_from_in(2.0)]),
        size=np.array([m_from_in(4.0), m_from_in(4.0), m_from_in(3.0)]),
    )
    plate = Rectangle(
        center=np.array([0.0, 0.0, 0.0117]),
        half_u=np.array([m_from_in(3.0), 0.0, 0.0]),
        half_v=np.array([0.0, m_from_in(3.0), 0.0]),
    )
    dispensers = [
        np.array([sx * 0.03, sy * 0.03, 0.005])
        for sx, sy in ((1, 1), (1, -1), (-1, 1), (-1, -1))
    ]
    geo = ApparatusGeometry(
        chamber_center=center,
        mot_position=mot,
        transport_distance=m_from_in(4.0),
        translator_throw=m_from_in(60.0),
        cavity_envelope=cavity,
        carrier_plate=plate,
        dispenser_positions=dispensers,
        feedthrough_pin_count=40,
    )
    geo.validate()
    return geo
