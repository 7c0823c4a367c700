"""Force providers for the lumped-mass tether model.

A provider is either a *node* force (acts on the lumped masses, e.g.
gravity or inertia) or a *segment* force (acts on a rigid segment, e.g.
drag), in which case the solver splits it half-and-half onto the segment's two
nodes. Adding a new effect means writing one provider:

    class Buoyancy(NodeForce):
        def forces(self, q, model, env):
            ...

Providers may implement ``jacobian`` analytically; otherwise a local central
difference is used, which is exact enough for Newton but slower.
"""

from __future__ import annotations

import enum

import numpy as np


class ForceKind(enum.Enum):
    NODE = "node"
    SEGMENT = "segment"


class ForceProvider:
    kind: ForceKind
    name = "force"
    fd_step = 1e-7

    def forces(self, q: np.ndarray, model, env) -> np.ndarray:
        """Per-node ``(N+1, 2)`` or per-segment ``(N, 2)`` force array [N]."""
        raise NotImplementedError

    def jacobian(self, q: np.ndarray, model, env) -> np.ndarray:
        """Derivatives of :meth:`forces` with respect to node positions.

        Node forces: ``(N+1, 2, 2)`` with ``[i, f, c] = dF_i[f] / dq_i[c]``.
        Segment forces: ``(N, 2, 2, 2)`` with ``[j, end, f, c]`` where ``end``
        is 0 for the segment's first node and 1 for its second.
        """
        return self._fd_jacobian(q, model, env)

    def _fd_jacobian(self, q, model, env):
        # forces are local, so perturbing one coordinate of every node at once
        # is safe for node forces; segments need their two ends separately
        h = self.fd_step * max(1.0, float(np.max(np.abs(q))))
        if self.kind is ForceKind.NODE:
            jac = np.empty((q.shape[0], 2, 2))
            for c in range(2):
                dq = np.zeros_like(q)
                dq[:, c] = h
                jac[:, :, c] = (self.forces(q + dq, model, env) - self.forces(q - dq, model, env)) / (2 * h)
            return jac
        n = q.shape[0] - 1
        jac = np.empty((n, 2, 2, 2))
        for end in range(2):
            for c in range(2):
                # even/odd node sweeps keep each segment's two ends independent
                acc = np.empty((n, 2))
                for parity in range(2):
                    dq = np.zeros_like(q)
                    nodes = np.arange(n + 1)
                    sel = nodes % 2 == parity
                    dq[sel, c] = h
                    diff = (self.forces(q + dq, model, env) - self.forces(q - dq, model, env)) / (2 * h)
                    seg_nodes = np.arange(n) + end
                    mask = seg_nodes % 2 == parity
                    acc[mask] = diff[mask]
                jac[:, end, :, c] = acc
        return jac


class NodeForce(ForceProvider):
    kind = ForceKind.NODE


class SegmentForce(ForceProvider):
    kind = ForceKind.SEGMENT


class Gravity(NodeForce):
    name = "gravity"

    def forces(self, q, model, env):
        out = np.zeros_like(q)
        out[:, 1] = -model.node_mass * model.spec.gravity
        return out

    def jacobian(self, q, model, env):
        return np.zeros((q.shape[0], 2, 2))


class SegmentDrag(SegmentForce):
    """Horizontal drag on each segment with exposed area ``d * |dy|``."""

    name = "drag"

    def _coefficient(self, model, env):
        spec = model.spec
        v = env.airspeed
        return 0.5 * spec.air_density * spec.drag_coefficient * spec.diameter * v * abs(v)

    def forces(self, q, model, env):
        dy = np.diff(q[:, 1])
        out = np.zeros((dy.size, 2))
        out[:, 0] = self._coefficient(model, env) * np.abs(dy)
        return out

    def jacobian(self, q, model, env):
        dy = np.diff(q[:, 1])
        slope = self._coefficient(model, env) * np.sign(dy)
        jac = np.zeros((dy.size, 2, 2, 2))
        jac[:, 0, 0, 1] = -slope
        jac[:, 1, 0, 1] = slope
        return jac


class Inertia(NodeForce):
    """D'Alembert force ``-m_i * a`` using the drone acceleration for every node."""

    name = "inertia"

    def forces(self, q, model, env):
        acc = np.asarray(env.drone_acceleration, dtype=float)
        return -model.node_mass[:, None] * acc[None, :]

    def jacobian(self, q, model, env):
        return np.zeros((q.shape[0], 2, 2))


def default_providers(inertia: bool = False) -> list[ForceProvider]:
    providers = [Gravity(), SegmentDrag()]
    if inertia:
        providers.append(Inertia())
    return providers
