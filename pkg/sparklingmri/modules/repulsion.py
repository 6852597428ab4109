"""SPARKLING MRI: Pairwise Repulsion

Repulsion energy E = sum over ordered pairs i != j of ||k_i - k_j||, and
per-point force sum_j (k_i - k_j) / ||k_i - k_j|| with the zero vector for
coincident pairs. Small point sets are summed exactly in row blocks;
larger ones go through a quadtree that replaces far cells by their
centroid.
"""
from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np

from ..const import BARNES_HUT_THETA, EXACT_REPULSION_LIMIT

BLOCK_ELEMENTS = 1 << 22
LEAF_SIZE = 32
MAX_DEPTH = 24

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Repulsion:
    """Ordered-pair energy, per-point force and coincident pair count"""

    energy: float
    force: np.ndarray
    coincident_pairs: int


def _unit_sum(
    diff: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Norms, zero-safe unit vectors and coincidence flags of differences"""
    norm = np.sqrt(np.sum(diff**2, axis=-1))
    zero = norm == 0.0
    unit = diff / np.where(zero, 1.0, norm)[..., None]
    return norm, unit, zero


def exact_repulsion(points: np.ndarray) -> Repulsion:
    """Direct O(p^2) summation in row blocks"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    count = len(points)
    block = max(1, BLOCK_ELEMENTS // max(count, 1))
    force = np.zeros_like(points)
    energy = 0.0
    zero_pairs = 0
    for start in range(0, count, block):
        rows = points[start : start + block]
        norm, unit, zero = _unit_sum(rows[:, None, :] - points[None, :, :])
        force[start : start + block] = np.sum(unit, axis=1)
        energy += float(np.sum(norm))
        # Self pairs are the only zeros expected on the diagonal
        zero_pairs += int(np.sum(zero)) - len(rows)
    return Repulsion(energy, force, zero_pairs // 2)


@dataclass(frozen=True)
class QuadTree:
    """Flat array quadtree over a point set

    Nodes are stored breadth first. A leaf owns the contiguous slice
    `order[start:start + count]`; internal nodes have `count` members too,
    but only leaves are expanded into point pairs.
    """

    lower: np.ndarray
    size: np.ndarray
    centroid: np.ndarray
    mass: np.ndarray
    children: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray

    @classmethod
    def build(
        cls,
        points: np.ndarray,
        leaf_size: int = LEAF_SIZE,
    ) -> QuadTree:
        """Split cells with more than `leaf_size` points into quadrants"""
        lo = points.min(axis=0)
        side = float(np.max(points.max(axis=0) - lo)) * (1.0 + 1e-9) + 1e-12
        lower = [lo]
        size = [side]
        members = [np.arange(len(points))]
        depth = [0]
        children: list[list[int]] = [[-1, -1, -1, -1]]

        node = 0
        while node < len(members):
            idx = members[node]
            if len(idx) > leaf_size and depth[node] < MAX_DEPTH:
                half = size[node] / 2.0
                local = points[idx] - lower[node]
                quadrant = (local[:, 0] >= half).astype(int) * 2 + (
                    local[:, 1] >= half
                ).astype(int)
                for q in range(4):
                    subset = idx[quadrant == q]
                    if len(subset) == 0:
                        continue
                    children[node][q] = len(members)
                    lower.append(lower[node] + half * np.array([q // 2, q % 2]))
                    size.append(half)
                    members.append(subset)
                    depth.append(depth[node] + 1)
                    children.append([-1, -1, -1, -1])
            node += 1

        children_array = np.array(children, dtype=np.int64)
        leaves = np.all(children_array < 0, axis=1)
        start = np.zeros(len(members), dtype=np.int64)
        order_parts = []
        offset = 0
        for node, idx in enumerate(members):
            if leaves[node]:
                start[node] = offset
                order_parts.append(idx)
                offset += len(idx)
        return cls(
            lower=np.array(lower),
            size=np.array(size),
            centroid=np.array([points[idx].mean(axis=0) for idx in members]),
            mass=np.array([len(idx) for idx in members], dtype=np.float64),
            children=children_array,
            start=start,
            count=np.array([len(idx) for idx in members], dtype=np.int64),
            order=np.concatenate(order_parts),
        )

    @property
    def leaves(self) -> np.ndarray:
        """Leaf flags"""
        return np.all(self.children < 0, axis=1)


def _leaf_pairs(
    tree: QuadTree,
    points: np.ndarray,
    targets: np.ndarray,
    nodes: np.ndarray,
    force: np.ndarray,
) -> tuple[float, int]:
    """Direct sums between target points and every member of their leaves"""
    energy = 0.0
    zero_pairs = 0
    counts = tree.count[nodes]
    cumulative = np.cumsum(counts)
    begin = 0
    while begin < len(nodes):
        # Chunk so that the expanded pair arrays stay bounded
        done = int(cumulative[begin - 1]) if begin else 0
        end = int(np.searchsorted(cumulative, done + BLOCK_ELEMENTS, side="right"))
        end = max(end, begin + 1)
        chunk_targets = targets[begin:end]
        chunk_nodes = nodes[begin:end]
        chunk_counts = counts[begin:end]
        rows = np.repeat(chunk_targets, chunk_counts)
        first = np.repeat(tree.start[chunk_nodes], chunk_counts)
        within = np.arange(len(rows)) - np.repeat(
            np.cumsum(chunk_counts) - chunk_counts, chunk_counts
        )
        cols = tree.order[first + within]
        norm, unit, zero = _unit_sum(points[rows] - points[cols])
        force[:, 0] += np.bincount(rows, weights=unit[:, 0], minlength=len(points))
        force[:, 1] += np.bincount(rows, weights=unit[:, 1], minlength=len(points))
        energy += float(np.sum(norm))
        zero_pairs += int(np.sum(zero & (rows != cols)))
        begin = end
    return energy, zero_pairs


def barnes_hut_repulsion(
    points: np.ndarray,
    theta: float = BARNES_HUT_THETA,
    leaf_size: int = LEAF_SIZE,
) -> Repulsion:
    """Quadtree approximation with opening angle `theta`

    Every point walks the tree breadth first, all points at once. A cell is
    summarized by its centroid when it does not contain the point and its
    side over the distance to the centroid is below `theta`.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    tree = QuadTree.build(points, leaf_size)
    leaves = tree.leaves
    force = np.zeros_like(points)
    energy = 0.0
    zero_pairs = 0

    targets = np.arange(len(points))
    nodes = np.zeros(len(points), dtype=np.int64)
    while len(targets):
        position = points[targets]
        lower = tree.lower[nodes]
        side = tree.size[nodes]
        inside = np.all((position >= lower) & (position <= lower + side[:, None]), axis=1)
        diff = position - tree.centroid[nodes]
        distance = np.sqrt(np.sum(diff**2, axis=1))
        far = ~inside & (side < theta * distance)

        if far.any():
            weight = tree.mass[nodes[far]]
            unit = diff[far] / distance[far][:, None]
            force[:, 0] += np.bincount(
                targets[far], weights=weight * unit[:, 0], minlength=len(points)
            )
            force[:, 1] += np.bincount(
                targets[far], weights=weight * unit[:, 1], minlength=len(points)
            )
            energy += float(np.sum(weight * distance[far]))

        near_leaf = ~far & leaves[nodes]
        if near_leaf.any():
            leaf_energy, leaf_zero = _leaf_pairs(
                tree, points, targets[near_leaf], nodes[near_leaf], force
            )
            energy += leaf_energy
            zero_pairs += leaf_zero

        opened = ~far & ~leaves[nodes]
        child = tree.children[nodes[opened]]
        parent_targets = np.repeat(targets[opened], 4)
        child = child.reshape(-1)
        valid = child >= 0
        targets = parent_targets[valid]
        nodes = child[valid]

    logger.debug(
        "Quadtree repulsion: points=%s nodes=%s theta=%s",
        len(points),
        len(tree.mass),
        theta,
    )
    return Repulsion(energy, force, zero_pairs // 2)


def repulsion(
    points: np.ndarray,
    exact_limit: int = EXACT_REPULSION_LIMIT,
    theta: float = BARNES_HUT_THETA,
) -> Repulsion:
    """Exact sums up to `exact_limit` points, quadtree beyond"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(points) <= exact_limit:
        return exact_repulsion(points)
    return barnes_hut_repulsion(points, theta=theta)
