"""
Vectorized branch engine.

The reference stepper in :mod:`ghzsim.circuit` runs one loss pattern at a time
on dictionary states. This module propagates *all* loss patterns of one basis
input at once and returns the heralded measures as polynomials in the
per-category loss probabilities, so any parameter point can afterwards be
evaluated without re-simulating.

Representation
--------------
A population holds rows of photon mode ids (sorted ``uint16``; one entry per
photon) together with a branch id and a complex coefficient ``B`` in the
product representation ``sum B prod_p a^dag_{mode_p} |vac>``. The Fock
amplitude is ``A = B * sqrt(prod n!)``. Linear optics acts photon by photon;
identical rows are merged after each element.

Loss branches
-------------
Each loss site splits every branch into "not triggered" (unchanged) and
"triggered" (one photon of the channel moved to the site's loss channel,
amplitude factor ``n_m / sqrt(N)`` in the product representation). If none of
a branch's rows occupies the channel the two children coincide and are merged
back into one branch. Branch weights are stored as arrays indexed by the
number of triggered sites per category, or as plain numbers for a fixed
parameter point.

Pruning
-------
Rows that can no longer be accepted are dropped. For every photon the set of
terminal channels (detectors and, for coincidence acceptance, outputs) that it
can still reach is tracked per element. Hall-type counting bounds over all
terminal subsets discard rows that cannot deliver one photon to each terminal.
Because evolution is linear and rows evolve independently, dropping such rows
is exact for every accepted quantity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .circuit import (LOSS_CATEGORIES, PBS, Detector, LossSite, Netlist, Waveplate,
                      loss_channel_name)
from .errors import ConfigurationError
from .fock import H, V

NL = 8  # internal-index slots per (channel, polarization)
ACCEPTANCE_MODES = ("coincidence", "herald")
_ZERO_TOL = 1e-13  # |B| below this after merging is numerical cancellation
_LOST = 255  # mask marker for photons in loss channels


def mode_id(channel_index: int, pol: int, d: int) -> int:
    return (channel_index * 2 + pol) * NL + d


@dataclass
class CompiledNetlist:
    """Index tables derived once per netlist and acceptance rule."""

    netlist: Netlist
    acceptance: str
    channel_index: Dict[str, int]
    steps: List[tuple]
    site_category: Dict[str, int]
    category_sizes: Tuple[int, int, int]
    terminals: Tuple[str, ...]
    constrained: int  # bitmask of terminals that need exactly one photon
    output_bits: Tuple[int, ...]
    detector_bits: Tuple[int, ...]
    masks: List[np.ndarray]  # per step (state *before* step i), mode id -> reach mask
    final_mask: np.ndarray
    live: np.ndarray  # mode id -> 1 if not in a loss channel
    hit: np.ndarray
    sub: np.ndarray
    need: np.ndarray


def compile_netlist(n: Netlist, acceptance: str = "coincidence") -> CompiledNetlist:
    if acceptance not in ACCEPTANCE_MODES:
        raise ConfigurationError(f"unknown acceptance mode {acceptance!r}")
    chans = list(n.channels) + [loss_channel_name(s) for s in n.site_ids]
    cidx = {c: i for i, c in enumerate(chans)}
    n_modes = len(chans) * 2 * NL
    if n_modes > np.iinfo(np.uint16).max:
        raise ConfigurationError("netlist too large for the vectorized engine")
    outputs = tuple(n.outputs)
    dets = tuple(d.channel for d in n.detectors)
    terminals = dets + outputs
    if len(terminals) > 7:
        raise ConfigurationError("at most 7 terminal channels are supported")
    bit = {ch: 1 << i for i, ch in enumerate(terminals)}
    det_bits = tuple(bit[c] for c in dets)
    out_bits = tuple(bit[c] for c in outputs)
    constrained = sum(det_bits) + (sum(out_bits) if acceptance == "coincidence" else 0)

    cat_of = {c: i for i, c in enumerate(LOSS_CATEGORIES)}
    sizes = [0, 0, 0]
    site_cat = {}
    for s in n.loss_sites:
        site_cat[s.site_id] = cat_of[s.category]
        sizes[cat_of[s.category]] += 1

    site_index = {sid: i for i, sid in enumerate(n.site_ids)}
    steps: List[tuple] = []
    for el in n.elements:
        if isinstance(el, Waveplate):
            steps.append(("wp", cidx[el.channel], math.cos(el.angle), math.sin(el.angle)))
        elif isinstance(el, PBS):
            perm = np.arange(n_modes, dtype=np.uint16)
            route = {(el.in1, H): (el.out1, H), (el.in2, H): (el.out2, H),
                     (el.in1, V): (el.out2, V), (el.in2, V): (el.out1, V)}
            for (src, p), (dst, q) in route.items():
                for d in range(NL):
                    perm[mode_id(cidx[src], p, d)] = mode_id(cidx[dst], q, d)
            steps.append(("pbs", perm))
        elif isinstance(el, LossSite):
            steps.append(("loss", cidx[el.channel], cidx[loss_channel_name(el.site_id)],
                          site_cat[el.site_id], site_index[el.site_id]))
        elif isinstance(el, Detector):
            continue

    # reachable terminals per (channel, pol), propagated backwards
    n_ch = len(chans)
    reach = np.zeros((n_ch, 2), dtype=np.uint8)
    for ch in terminals:
        reach[cidx[ch], :] = bit[ch]
    masks_rev = [reach.copy()]
    for st in reversed(steps):
        new = reach.copy()
        if st[0] == "wp":
            c = st[1]
            new[c, :] = reach[c, 0] | reach[c, 1]
        elif st[0] == "pbs":
            perm = st[1]
            for c in range(n_ch):
                for p in (H, V):
                    m = mode_id(c, p, 0)
                    if perm[m] != m:
                        tgt = int(perm[m]) // NL
                        new[c, p] = reach[tgt // 2, tgt % 2]
        reach = new
        masks_rev.append(reach.copy())
    masks_rev.reverse()  # masks_rev[i] = reach before step i; [-1] = after all steps

    loss_ch = np.zeros(n_ch, dtype=bool)
    for s in n.site_ids:
        loss_ch[cidx[loss_channel_name(s)]] = True

    def expand(r):
        m = np.repeat(r.reshape(-1), NL).astype(np.uint8)
        m[np.repeat(loss_ch, 2 * NL)] = _LOST
        return m

    masks = [expand(r) for r in masks_rev[:-1]]
    final_mask = expand(masks_rev[-1])
    live = (~np.repeat(loss_ch, 2 * NL)).astype(np.int16)

    # Hall-type count tables over subsets W of the constrained terminals
    Ws = [w for w in range(1, 128) if w & ~constrained == 0]
    hit = np.zeros((256, len(Ws)), dtype=np.uint8)
    sub = np.zeros((256, len(Ws)), dtype=np.uint8)
    for m in range(128):
        for k, w in enumerate(Ws):
            hit[m, k] = 1 if m & w else 0
            # photons that must end in W or be lost (mask 0: must be lost)
            sub[m, k] = 1 if (m & ~w) == 0 else 0
    need = np.array([bin(w).count("1") for w in Ws], dtype=np.int16)

    return CompiledNetlist(n, acceptance, cidx, steps, site_cat, tuple(sizes), terminals,
                           constrained, out_bits, det_bits, masks, final_mask, live,
                           hit, sub, need)


# ---------------------------------------------------------------------------
# Branch weights


class PolynomialWeights:
    """Branch weights as coefficient arrays over triggered-site counts per category."""

    def __init__(self, sizes: Sequence[int]):
        self.shape = tuple(s + 1 for s in sizes)

    def root(self) -> np.ndarray:
        w = np.zeros(self.shape)
        w[0, 0, 0] = 1.0
        return w[None]

    def shifted(self, w: np.ndarray, cat: int) -> np.ndarray:
        out = np.zeros_like(w)
        src = [slice(None)] * 4
        dst = [slice(None)] * 4
        src[cat + 1] = slice(0, -1)
        dst[cat + 1] = slice(1, None)
        out[tuple(dst)] = w[tuple(src)]
        return out

    def untriggered(self, w, cat, site):
        return w

    def triggered(self, w, cat, site):
        return self.shifted(w, cat)

    def merged(self, w, cat, site):
        return w + self.shifted(w, cat)


class PointWeights:
    """
    Branch weights as numbers for fixed per-site trigger probabilities.

    Probabilities 0/1 select one explicit loss pattern.
    """

    def __init__(self, site_probs: Sequence[float]):
        self.probs = np.asarray(site_probs, dtype=float)

    def root(self) -> np.ndarray:
        return np.ones(1)

    def untriggered(self, w, cat, site):
        return w * (1.0 - self.probs[site])

    def triggered(self, w, cat, site):
        return w * self.probs[site]

    def merged(self, w, cat, site):
        return w


# ---------------------------------------------------------------------------
# Population kernels


def _sort_rows(rows: np.ndarray) -> np.ndarray:
    """Sort each row; an odd-even transposition network over columns beats
    ``np.sort(axis=1)`` by a wide margin for these short rows."""
    w = rows.shape[1]
    if w < 2 or len(rows) == 0:
        return rows
    cols = [rows[:, i].copy() for i in range(w)]
    for r in range(w):
        for i in range(r % 2, w - 1, 2):
            lo = np.minimum(cols[i], cols[i + 1])
            cols[i + 1] = np.maximum(cols[i], cols[i + 1])
            cols[i] = lo
    return np.stack(cols, axis=1)


def _merge(bid: np.ndarray, rows: np.ndarray, coef: np.ndarray):
    if len(bid) == 0:
        return bid, rows, coef
    key = np.empty((len(bid), rows.shape[1] + 2), dtype=np.uint16)
    key[:, 0] = bid >> 16
    key[:, 1] = bid & 0xFFFF
    key[:, 2:] = rows
    view = np.ascontiguousarray(key).view(np.dtype((np.void, key.dtype.itemsize * key.shape[1])))
    _, first, inv = np.unique(view.ravel(), return_index=True, return_inverse=True)
    inv = inv.ravel()
    re = np.bincount(inv, weights=coef.real, minlength=len(first))
    im = np.bincount(inv, weights=coef.imag, minlength=len(first))
    c = re + 1j * im
    keep = np.abs(c) > _ZERO_TOL
    first = first[keep]
    return bid[first], rows[first], c[keep]


class _Engine:
    def __init__(self, cn: CompiledNetlist, weights):
        self.cn = cn
        self.wt = weights
        self.n_terminals_needed = bin(cn.constrained).count("1")

    # -- viability ---------------------------------------------------------
    def viable(self, rows: np.ndarray, mask_table: np.ndarray) -> np.ndarray:
        """Rows that can still deliver exactly one photon to every constrained terminal."""
        if len(rows) == 0:
            return np.zeros(0, dtype=bool)
        # viability depends only on the multiset of reach masks of a row
        m = _sort_rows(mask_table[rows])
        uniq, inv = _unique_rows(m)
        cn = self.cn
        live = (uniq != _LOST).sum(axis=1)
        surplus = live - self.n_terminals_needed
        hits = cn.hit[uniq].sum(axis=1, dtype=np.int16)
        good = (surplus >= 0) & (hits >= cn.need).all(axis=1)
        if cn.acceptance == "coincidence":
            subs = cn.sub[uniq].sum(axis=1, dtype=np.int16)
            good &= (subs <= cn.need + surplus[:, None]).all(axis=1)
        return good[inv]

    # -- elements ------------------------------------------------------------
    def rotate(self, bid, rows, coef, ch, c, s):
        chan = rows // (2 * NL)
        for j in range(rows.shape[1]):
            sel = chan[:, j] == ch
            if not sel.any():
                continue
            r, cf, b = rows[sel], coef[sel], bid[sel]
            pol = (r[:, j] // NL) % 2
            base = r[:, j] - pol * NL
            rh = r.copy()
            rh[:, j] = base
            rv = r.copy()
            rv[:, j] = base + NL
            fh = np.where(pol == 0, c, -s)
            fv = np.where(pol == 0, s, c)
            keep = ~sel
            parts_r, parts_c, parts_b, parts_ch = [rows[keep]], [coef[keep]], [bid[keep]], [chan[keep]]
            for rr, ff in ((rh, fh), (rv, fv)):
                nz = ff != 0
                parts_r.append(rr[nz])
                parts_c.append(cf[nz] * ff[nz])
                parts_b.append(b[nz])
                parts_ch.append(chan[sel][nz])
            rows = np.concatenate(parts_r)
            coef = np.concatenate(parts_c)
            bid = np.concatenate(parts_b)
            chan = np.concatenate(parts_ch)
        rows = _sort_rows(rows)
        return _merge(bid, rows, coef)

    def lose(self, rows, coef, ch, loss_ch):
        """Loss map on rows that all occupy ``ch``; returns new rows/coefs and source index."""
        chan = rows // (2 * NL)
        in_ch = chan == ch
        N = in_ch.sum(axis=1)
        out_r, out_c, out_i = [], [], []
        scale = coef / np.sqrt(N)
        idx = np.arange(len(rows))
        for j in range(rows.shape[1]):
            sel = in_ch[:, j]
            if not sel.any():
                continue
            r = rows[sel].copy()
            within = r[:, j] - ch * 2 * NL
            r[:, j] = loss_ch * 2 * NL + within
            out_r.append(r)
            out_c.append(scale[sel])
            out_i.append(idx[sel])
        return np.concatenate(out_r), np.concatenate(out_c), np.concatenate(out_i)

    # -- main loop -----------------------------------------------------------
    def propagate(self, photons: Sequence[Sequence[int]], amplitudes: Sequence[complex],
                  signs: np.ndarray):
        cn = self.cn
        width = len(photons[0])
        rows = _sort_rows(np.array(photons, dtype=np.uint16).reshape(len(photons), width))
        coef = np.asarray(amplitudes, dtype=complex)
        # convert Fock amplitudes to the product representation
        coef = coef / np.sqrt(_factorials(rows))
        bid = np.zeros(len(rows), dtype=np.int64)
        bid, rows, coef = _merge(bid, rows, coef)
        weights = self.wt.root()
        ok = self.viable(rows, cn.masks[0]) if cn.steps else np.ones(len(rows), bool)
        bid, rows, coef = bid[ok], rows[ok], coef[ok]

        for i, st in enumerate(cn.steps):
            if len(rows) == 0:
                break
            kind = st[0]
            if kind == "wp":
                bid, rows, coef = self.rotate(bid, rows, coef, st[1], st[2], st[3])
            elif kind == "pbs":
                rows = _sort_rows(st[1][rows])
                ok = self.viable(rows, cn.masks[i + 1] if i + 1 < len(cn.steps) else cn.final_mask)
                bid, rows, coef = bid[ok], rows[ok], coef[ok]
            else:
                _, ch, loss_ch, cat, site = st
                nb = len(weights)
                occ = ((rows // (2 * NL)) == ch).any(axis=1)
                has = np.bincount(bid[occ], minlength=nb) > 0
                sel = has.reshape((nb,) + (1,) * (weights.ndim - 1))
                new_w = np.where(sel, self.wt.untriggered(weights, cat, site),
                                 self.wt.merged(weights, cat, site))
                split = np.flatnonzero(has)
                if len(split):
                    remap = np.full(nb, -1, dtype=np.int64)
                    remap[split] = nb + np.arange(len(split))
                    in_split = has[bid]
                    t_empty = in_split & ~occ
                    t_occ = in_split & occ
                    lr, lc, li = self.lose(rows[t_occ], coef[t_occ], ch, loss_ch)
                    lb = bid[t_occ][li]
                    nxt = cn.masks[i + 1] if i + 1 < len(cn.steps) else cn.final_mask
                    lr = _sort_rows(lr)
                    good = self.viable(lr, nxt)
                    # copies of empty-channel rows stay distinct; only lost rows can coincide
                    mb, mr, mc = _merge(remap[lb[good]], lr[good], lc[good])
                    tb = np.concatenate([remap[bid[t_empty]], mb])
                    tr = np.concatenate([rows[t_empty], mr])
                    tc = np.concatenate([coef[t_empty], mc])
                    new_w = np.concatenate([new_w, self.wt.triggered(weights[split], cat, site)])
                    bid = np.concatenate([bid, tb])
                    rows = np.concatenate([rows, tr])
                    coef = np.concatenate([coef, tc])
                packed = _compact(bid, new_w)
                if len(packed) == 3:
                    bid, weights, keep = packed
                    rows, coef = rows[keep], coef[keep]
                else:
                    bid, weights = packed
        return self.measure(bid, rows, coef, weights, signs)

    def measure(self, bid, rows, coef, weights, signs):
        cn = self.cn
        weights = np.asarray(weights)
        nb = len(weights)
        if len(rows) == 0 or nb == 0:
            return np.zeros(weights.shape[1:] + (2,))
        m = cn.final_mask[rows]
        m = np.where(m == _LOST, 0, m)
        amp = coef * np.sqrt(_factorials(rows))
        prob = np.abs(amp) ** 2

        def count(b):
            return ((m & b) > 0).sum(axis=1)

        accepted = np.ones(len(rows), dtype=bool)
        for b in cn.detector_bits:
            accepted &= count(b) == 1
        outputs_single = np.ones(len(rows), dtype=bool)
        for b in cn.output_bits:
            outputs_single &= count(b) == 1
        if cn.acceptance == "coincidence":
            accepted &= outputs_single
        success = np.bincount(bid[accepted], weights=prob[accepted], minlength=nb)

        # GHZ numerator: group by environment (everything except output polarizations)
        ghz = accepted & outputs_single
        r = rows[ghz]
        mm = m[ghz]
        is_out = np.zeros(r.shape, dtype=bool)
        for b in cn.output_bits:
            is_out |= (mm & b) > 0
        pol = ((r // NL) % 2).astype(np.int64)
        n_out = len(cn.output_bits)
        out_v = (pol * is_out).sum(axis=1)
        keep = (out_v == 0) | (out_v == n_out)
        pattern = np.zeros(len(r), dtype=np.int64)
        for k, b in enumerate(cn.detector_bits):
            pattern = pattern * 2 + (pol * ((mm & b) > 0)).sum(axis=1)
        eps = signs[pattern]
        z = amp[ghz] * np.where(out_v == n_out, eps, 1.0)
        env = r - (pol * is_out * NL).astype(np.uint16)
        eb, er, ez = _merge(bid[ghz][keep], env[keep], z[keep]) if keep.any() else (
            np.zeros(0, np.int64), env[:0], z[:0])
        numer = np.bincount(eb, weights=np.abs(ez) ** 2 / 2.0, minlength=nb)
        per_branch = np.stack([success, numer], axis=-1)  # (nb, 2)
        return np.tensordot(weights, per_branch, axes=([0], [0]))


def _unique_rows(m: np.ndarray):
    """Unique rows of a small-width ``uint8`` array and the inverse index."""
    w = m.shape[1]
    width = 8 if w <= 8 else 16
    padded = np.zeros((len(m), width), dtype=np.uint8)
    padded[:, :w] = m
    keys = padded.view(np.uint64)
    if width == 8:
        uk, inv = np.unique(keys.ravel(), return_inverse=True)
        uniq = uk.view(np.uint8).reshape(-1, 8)[:, :w]
    else:
        uk, inv = np.unique(keys, axis=0, return_inverse=True)
        uniq = np.ascontiguousarray(uk).view(np.uint8).reshape(-1, 16)[:, :w]
    return uniq, inv.ravel()


def _compact(bid, weights):
    nb = len(weights)
    used = np.bincount(bid, minlength=nb) > 0
    used &= np.any(weights.reshape(nb, -1) != 0, axis=1)
    if used.all():
        return bid, weights
    newid = np.cumsum(used) - 1
    keep = used[bid]
    return newid[bid[keep]], weights[used], keep


def _factorials(rows: np.ndarray) -> np.ndarray:
    """``prod n!`` for sorted rows."""
    fact = np.ones(len(rows))
    run = np.ones(len(rows))
    for j in range(1, rows.shape[1]):
        same = rows[:, j] == rows[:, j - 1]
        run = np.where(same, run + 1, 1)
        fact *= run
    return fact


# ---------------------------------------------------------------------------
# Public entry points


def sign_vector(signs: Mapping[Tuple[int, ...], int], n_detectors: int) -> np.ndarray:
    vec = np.ones(1 << n_detectors)
    for pattern, eps in signs.items():
        idx = 0
        for p in pattern:
            idx = idx * 2 + p
        vec[idx] = eps
    return vec


def photon_rows(cn: CompiledNetlist, configs) -> List[List[int]]:
    """Translate iterables of ``(channel, pol, d)`` photons into mode-id rows."""
    out = []
    for photons in configs:
        row = []
        for ch, p, d in photons:
            if not 0 <= d < NL:
                raise ConfigurationError(f"internal index {d} exceeds engine capacity {NL - 1}")
            row.append(mode_id(cn.channel_index[ch], p, d))
        out.append(row)
    return out


def branch_polynomial(cn: CompiledNetlist, configs, amplitudes, signs) -> np.ndarray:
    """
    Measures of one input superposition summed over all loss patterns, as an
    array ``T[kp, ko, kd, (success, numerator)]`` of coefficients of
    ``prod_c p_c^k_c (1 - p_c)^(N_c - k_c)``.
    """
    eng = _Engine(cn, PolynomialWeights(cn.category_sizes))
    return eng.propagate(photon_rows(cn, configs), amplitudes,
                         sign_vector(signs, len(cn.detector_bits)))


def branch_point(cn: CompiledNetlist, configs, amplitudes, signs,
                 site_probs: Sequence[float]) -> np.ndarray:
    """
    Same as :func:`branch_polynomial` but with numeric weights: returns
    ``(success, numerator)`` for per-site trigger probabilities given in
    netlist site order.
    """
    if len(site_probs) != len(cn.netlist.site_ids):
        raise ConfigurationError("one probability per loss site is required")
    eng = _Engine(cn, PointWeights(site_probs))
    return eng.propagate(photon_rows(cn, configs), amplitudes,
                         sign_vector(signs, len(cn.detector_bits)))


def site_probabilities(cn: CompiledNetlist, category_probs: Sequence[float]) -> np.ndarray:
    """Expand per-category probabilities to per-site ones."""
    return np.array([category_probs[cn.site_category[s]] for s in cn.netlist.site_ids])


def loss_weight_vectors(sizes: Sequence[int], probs: Sequence[float]) -> List[np.ndarray]:
    """``p^k (1 - p)^(N - k)`` for ``k = 0..N`` per category."""
    out = []
    for n, p in zip(sizes, probs):
        k = np.arange(n + 1)
        out.append(p ** k * (1.0 - p) ** (n - k))
    return out


def contract_loss(table: np.ndarray, sizes: Sequence[int], probs: Sequence[float]) -> np.ndarray:
    """Evaluate the loss polynomial: contract axes ``(..., kp, ko, kd, 2)`` to ``(..., 2)``."""
    wp, wo, wd = loss_weight_vectors(sizes, probs)
    t = np.tensordot(table, wd, axes=([-2], [0]))
    t = np.tensordot(t, wo, axes=([-2], [0]))
    return np.tensordot(t, wp, axes=([-2], [0]))
