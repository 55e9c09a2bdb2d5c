//! Zero-space embedding of duplicate MSB columns into pruned columns.
//!
//! Column pruning leaves whole bitlines at zero in every bit plane of a
//! layer. The unpruned columns of MSB copies 2..T are written into those
//! bitlines, so redundancy needs no extra arrays when
//! `(T - 1) * kept <= n * pruned`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::ftol::{combine_with_lsbs, vote_median, CandidateOutputs, FtConfig, FtLayer};
use crate::xbar::{CrossbarLayer, CrossbarPlane, FaultMap, Polarity};

/// Slot accounting for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapacityReport {
    pub free_slots: usize,
    pub needed: usize,
    pub feasible: bool,
    pub deficit: usize,
}

impl CapacityReport {
    pub fn from_counts(bits: usize, candidates: usize, pruned: usize, cols: usize) -> Self {
        let free_slots = bits * pruned;
        let needed = candidates.saturating_sub(1) * (cols - pruned);
        Self {
            free_slots,
            needed,
            feasible: needed <= free_slots,
            deficit: needed.saturating_sub(free_slots),
        }
    }
}

/// Capacity for `bits` planes, `candidates` MSB copies and column sparsity
/// `sparsity` over `cols` columns.
pub fn capacity_check(
    bits: usize,
    candidates: usize,
    sparsity: f64,
    cols: usize,
) -> CapacityReport {
    let pruned = ((sparsity * cols as f64).round() as usize).min(cols);
    CapacityReport::from_counts(bits, candidates, pruned, cols)
}

/// Smallest sparsity at which embedding is always feasible: `(T-1)/(n+T-1)`.
pub fn sparsity_bound(bits: usize, candidates: usize) -> f64 {
    let extra = candidates.saturating_sub(1) as f64;
    extra / (bits as f64 + extra)
}

/// One duplicate column written into a host slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Assignment {
    /// MSB copy index in `2..=T`.
    pub copy: usize,
    pub source_col: usize,
    /// Host plane, 0 = MSB_1 then LSBs in descending significance.
    pub host_plane: usize,
    pub host_col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementMap {
    pub bits: usize,
    pub candidates: usize,
    pub cols: usize,
    /// Pruned column indices, ascending.
    pub index: Vec<usize>,
    pub assignments: Vec<Assignment>,
}

impl PlacementMap {
    pub fn empty(bits: usize, candidates: usize, cols: usize, index: Vec<usize>) -> Self {
        Self {
            bits,
            candidates,
            cols,
            index,
            assignments: Vec::new(),
        }
    }

    /// Checks slot uniqueness, source coverage and index membership.
    pub fn validate(&self) -> Result<()> {
        let pruned: BTreeSet<usize> = self.index.iter().copied().collect();
        let mut slots = BTreeSet::new();
        let mut sources = BTreeSet::new();
        for a in &self.assignments {
            if !pruned.contains(&a.host_col) || a.host_plane >= self.bits {
                return Err(Error::Slot(format!(
                    "host slot ({}, {}) is not a pruned column",
                    a.host_plane, a.host_col
                )));
            }
            if !(2..=self.candidates).contains(&a.copy)
                || a.source_col >= self.cols
                || pruned.contains(&a.source_col)
            {
                return Err(Error::Slot(format!(
                    "invalid source ({}, {})",
                    a.copy, a.source_col
                )));
            }
            if !slots.insert((a.host_plane, a.host_col)) {
                return Err(Error::Slot(format!(
                    "host slot ({}, {}) used twice",
                    a.host_plane, a.host_col
                )));
            }
            if !sources.insert((a.copy, a.source_col)) {
                return Err(Error::Slot(format!(
                    "source ({}, {}) placed twice",
                    a.copy, a.source_col
                )));
            }
        }
        let kept = self.cols - pruned.len();
        if sources.len() != self.candidates.saturating_sub(1) * kept {
            return Err(Error::Slot("not every duplicate column is placed".into()));
        }
        Ok(())
    }

    /// Host slot holding column `col` of MSB copy `copy`.
    pub fn slot_of(&self, copy: usize, col: usize) -> Option<(usize, usize)> {
        self.assignments
            .iter()
            .find(|a| a.copy == copy && a.source_col == col)
            .map(|a| (a.host_plane, a.host_col))
    }
}

fn sorted_index(index: &[usize], cols: usize) -> Result<Vec<usize>> {
    let set: BTreeSet<usize> = index.iter().copied().collect();
    if set.iter().any(|&c| c >= cols) {
        return Err(Error::Dimension(format!(
            "pruned index beyond {cols} columns"
        )));
    }
    Ok(set.into_iter().collect())
}

fn column_is_zero(plane: &CrossbarPlane, col: usize) -> bool {
    // Logical bits of the programmed cells, ignoring faults.
    let (rows, _) = plane.dims();
    let zero = u8::from(plane.flipped);
    (0..rows).all(|r| plane.pos.stored.get(r, col) == zero && plane.neg.stored.get(r, col) == zero)
}

/// Lays out every unpruned column of MSB copies 2..T in the pruned columns
/// of the host planes.
///
/// Sources are taken copy-major then by ascending column; slots are filled
/// plane-major (MSB_1 first, then LSBs) then by ascending pruned column.
pub fn plan_embedding(
    host: &CrossbarLayer,
    duplicates: &[CrossbarPlane],
    index: &[usize],
) -> Result<PlacementMap> {
    let (_, cols) = host.dims();
    let bits = host.planes.len();
    let candidates = duplicates.len() + 1;
    let index = sorted_index(index, cols)?;
    if duplicates.iter().any(|d| d.dims() != host.dims()) {
        return Err(Error::Dimension(
            "duplicate plane shape differs from host".into(),
        ));
    }
    for (p, plane) in host.planes.iter().enumerate() {
        if let Some(&c) = index.iter().find(|&&c| !column_is_zero(plane, c)) {
            return Err(Error::Slot(format!(
                "host plane {p} column {c} is not pruned"
            )));
        }
    }
    let report = CapacityReport::from_counts(bits, candidates, index.len(), cols);
    if !report.feasible {
        return Err(Error::Capacity(report));
    }

    let pruned: BTreeSet<usize> = index.iter().copied().collect();
    let sources = (2..=candidates).flat_map(|k| {
        (0..cols)
            .filter(|c| !pruned.contains(c))
            .map(move |c| (k, c))
    });
    let slots = (0..bits).flat_map(|p| index.iter().map(move |&c| (p, c)));
    let assignments = sources
        .zip(slots)
        .map(|((copy, source_col), (host_plane, host_col))| Assignment {
            copy,
            source_col,
            host_plane,
            host_col,
        })
        .collect();
    Ok(PlacementMap {
        bits,
        candidates,
        cols,
        index,
        assignments,
    })
}

fn check_map(host: &CrossbarLayer, map: &PlacementMap) -> Result<()> {
    let (_, cols) = host.dims();
    if map.bits != host.planes.len() || map.cols != cols {
        return Err(Error::Slot(format!(
            "map for {} planes x {} columns, host has {} x {cols}",
            map.bits,
            map.cols,
            host.planes.len()
        )));
    }
    map.validate()
}

/// Writes the duplicates' stored columns (both polarities) into their host
/// slots. Host faults are kept.
pub fn distribute(
    host: &CrossbarLayer,
    duplicates: &[CrossbarPlane],
    map: &PlacementMap,
) -> Result<CrossbarLayer> {
    check_map(host, map)?;
    if duplicates.len() + 1 != map.candidates {
        return Err(Error::Slot("duplicate count does not match map".into()));
    }
    let mut out = host.clone();
    for a in &map.assignments {
        let src = &duplicates[a.copy - 2];
        let dst = &mut out.planes[a.host_plane];
        for pol in [Polarity::Pos, Polarity::Neg] {
            let bits = src.array(pol).stored.column(a.source_col);
            dst.array_mut(pol).stored.set_column(a.host_col, &bits);
        }
    }
    Ok(out)
}

/// Reads MSB copies 2..T back out of the host slots.
///
/// Each returned plane stores the host's effective (fault-applied) cells
/// at the translated coordinates and carries no fault map of its own.
/// Pruned columns hold the stored form of a logical zero.
pub fn gather_embedded(host: &CrossbarLayer, map: &PlacementMap) -> Result<Vec<CrossbarPlane>> {
    check_map(host, map)?;
    let msb = &host.planes[0];
    let blank = {
        let mut p = msb.clone();
        p.clear_faults();
        let fill = u8::from(p.flipped);
        let (rows, cols) = p.dims();
        for pol in [Polarity::Pos, Polarity::Neg] {
            for r in 0..rows {
                for c in 0..cols {
                    p.array_mut(pol).stored.set(r, c, fill);
                }
            }
        }
        p
    };
    let mut dups = vec![blank; map.candidates.saturating_sub(1)];
    let effective: Vec<[_; 2]> = host
        .planes
        .iter()
        .map(|p| [p.pos.effective(), p.neg.effective()])
        .collect();
    for a in &map.assignments {
        let dst = &mut dups[a.copy - 2];
        for (i, pol) in [Polarity::Pos, Polarity::Neg].into_iter().enumerate() {
            let bits = effective[a.host_plane][i].column(a.host_col);
            dst.array_mut(pol).stored.set_column(a.source_col, &bits);
        }
    }
    Ok(dups)
}

/// Fault-tolerant inference reading MSB copies 2..T from their host slots.
///
/// Outputs at pruned columns are zero.
pub fn infer_layer_embedded(
    host: &CrossbarLayer,
    map: &PlacementMap,
    cfg: &FtConfig,
    x: &[f64],
) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_map(host, map)?;
    if cfg.candidates != map.candidates {
        return Err(Error::Config(format!(
            "config has {} candidates, placement map {}",
            cfg.candidates, map.candidates
        )));
    }
    let (rows, cols) = host.dims();
    if x.len() != rows {
        return Err(Error::Dimension(format!(
            "input of length {} for {rows} wordlines",
            x.len()
        )));
    }
    let msb = &host.planes[0];
    let scale = f64::from(1u32 << msb.power);
    let first: Vec<f64> = crate::xbar::plane_partial(msb, x)?
        .into_iter()
        .map(|v| scale * v)
        .collect();
    let mut cands = vec![first];
    cands.extend(vec![vec![0.0; cols]; map.candidates - 1]);
    // Duplicates inherit the MSB's storage convention wherever they sit.
    for a in &map.assignments {
        let plane = &host.planes[a.host_plane];
        let pos = plane.pos.read_column(x, a.host_col, msb.flipped)?;
        let neg = plane.neg.read_column(x, a.host_col, msb.flipped)?;
        cands[a.copy - 1][a.source_col] = scale * (pos - neg);
    }
    let voted = vote_median(&CandidateOutputs(cands))?;
    let mut out = combine_with_lsbs(host, voted, x)?;
    for &j in &map.index {
        out[j] = 0.0;
    }
    Ok(out)
}

/// Builds the side-by-side duplicated layer whose fault maps are the
/// embedded host's faults translated to logical coordinates.
///
/// `original` is the pre-embedding layer. Its planes take the host faults at
/// unpruned columns; copy `k` takes the faults found at its host slots.
pub fn translate_faults(
    original: &CrossbarLayer,
    host: &CrossbarLayer,
    map: &PlacementMap,
) -> Result<FtLayer> {
    check_map(host, map)?;
    if original.dims() != host.dims() || original.planes.len() != host.planes.len() {
        return Err(Error::Dimension(
            "original and host layers differ in shape".into(),
        ));
    }
    let pruned: BTreeSet<usize> = map.index.iter().copied().collect();
    let mut base = original.clone();
    for (dst, src) in base.planes.iter_mut().zip(&host.planes) {
        for pol in [Polarity::Pos, Polarity::Neg] {
            let mut faults = FaultMap::new();
            for (r, c, v) in src.array(pol).faults.iter() {
                if !pruned.contains(&c) {
                    faults.insert(r, c, v);
                }
            }
            dst.array_mut(pol).faults = faults;
        }
    }
    let mut msb = original.planes[0].clone();
    msb.clear_faults();
    let mut duplicates = vec![msb; map.candidates.saturating_sub(1)];
    for a in &map.assignments {
        let src = &host.planes[a.host_plane];
        let dst = &mut duplicates[a.copy - 2];
        for pol in [Polarity::Pos, Polarity::Neg] {
            let hits: Vec<_> = src
                .array(pol)
                .faults
                .iter()
                .filter(|&(_, c, _)| c == a.host_col)
                .collect();
            for (r, _, v) in hits {
                dst.array_mut(pol).faults.insert(r, a.source_col, v);
            }
        }
    }
    Ok(FtLayer { base, duplicates })
}

/// Physical bitlines per sign array.
pub fn physical_columns(planes: &[CrossbarPlane]) -> usize {
    planes.iter().map(|p| p.dims().1).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ftol::{duplicate_msb, infer_layer_ft, StreamBase};
    use crate::matrix::{BitMatrix, Matrix};
    use crate::quant::{quantize, QuantConfig};
    use crate::xbar::{layer_matvec, map_layer, FaultModel, FlipPolicy};

    /// Brute-force slot count over an explicit pruned column set.
    fn brute_capacity(bits: usize, t: usize, pruned: usize, cols: usize) -> (usize, usize) {
        let pruned_set: BTreeSet<usize> = (0..pruned).collect();
        let mut free = 0;
        for _p in 0..bits {
            for c in 0..cols {
                if pruned_set.contains(&c) {
                    free += 1;
                }
            }
        }
        let mut needed = 0;
        for _k in 2..=t {
            needed += (0..cols).filter(|c| !pruned_set.contains(c)).count();
        }
        (free, needed)
    }

    #[test]
    fn capacity_examples() {
        let r = capacity_check(8, 3, 0.30, 100);
        assert_eq!((r.free_slots, r.needed, r.feasible), (240, 140, true));
        let r = capacity_check(8, 3, 0.20, 100);
        assert_eq!((r.free_slots, r.needed, r.feasible), (160, 160, true));
        let r = capacity_check(8, 3, 0.19, 100);
        assert_eq!((r.feasible, r.deficit), (false, 10));
        assert!((sparsity_bound(8, 3) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn capacity_matches_brute_force() {
        for bits in 2..=8 {
            for t in [1, 3, 5] {
                for cols in (10..=200).step_by(7) {
                    for pruned in 0..=cols {
                        let s = pruned as f64 / cols as f64;
                        let r = capacity_check(bits, t, s, cols);
                        let (free, needed) = brute_capacity(bits, t, pruned, cols);
                        assert_eq!((r.free_slots, r.needed), (free, needed));
                        assert_eq!(r.feasible, needed <= free);
                    }
                }
            }
        }
    }

    /// Two-plane layer with columns 1 and 3 zero.
    fn pruned_layer() -> CrossbarLayer {
        let w = Matrix::from_rows(&[
            vec![0.9, 0.0, -0.4, 0.0],
            vec![-0.6, 0.0, 0.3, 0.0],
            vec![0.2, 0.0, -0.8, 0.0],
        ])
        .unwrap();
        map_layer(
            &quantize(&w, QuantConfig::new(2).unwrap()).unwrap(),
            FlipPolicy::MsbOnly,
        )
    }

    #[test]
    fn hand_traced_plan() {
        let layer = pruned_layer();
        // T = 2: a single duplicate of the MSB plane.
        let map = plan_embedding(&layer, &[layer.planes[0].clone()], &[3, 1]).unwrap();
        let got: Vec<_> = map
            .assignments
            .iter()
            .map(|a| (a.copy, a.source_col, a.host_plane, a.host_col))
            .collect();
        assert_eq!(got, vec![(2, 0, 0, 1), (2, 2, 0, 3)]);
        assert_eq!(map.index, vec![1, 3]);
        map.validate().unwrap();
    }

    #[test]
    fn degenerate_plans_are_empty() {
        let layer = pruned_layer();
        let map = plan_embedding(&layer, &[], &[1, 3]).unwrap();
        assert!(map.assignments.is_empty());

        let zeros = map_layer(
            &quantize(&Matrix::zeros(3, 4), QuantConfig::new(3).unwrap()).unwrap(),
            FlipPolicy::MsbOnly,
        );
        let dups = vec![zeros.planes[0].clone(); 2];
        let map = plan_embedding(&zeros, &dups, &[0, 1, 2, 3]).unwrap();
        assert!(map.assignments.is_empty());
        let gathered = gather_embedded(&zeros, &map).unwrap();
        for g in &gathered {
            assert_eq!(g.effective_logical(Polarity::Pos), BitMatrix::zeros(3, 4));
        }
    }

    #[test]
    fn rejects_unpruned_host_and_short_capacity() {
        let layer = pruned_layer();
        let dups = vec![layer.planes[0].clone(); 2];
        assert!(matches!(
            plan_embedding(&layer, &dups, &[0]),
            Err(Error::Slot(_))
        ));
        // Two pruned of four columns, two planes, four copies: need 3*2 > 4.
        let dups = vec![layer.planes[0].clone(); 3];
        match plan_embedding(&layer, &dups, &[1, 3]) {
            Err(Error::Capacity(r)) => assert_eq!((r.needed, r.free_slots, r.deficit), (6, 4, 2)),
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn gather_inverts_distribute_and_reads_faults() {
        let layer = pruned_layer();
        let ft = duplicate_msb(&layer, &FtConfig::default(), StreamBase::default()).unwrap();
        let map = plan_embedding(&layer, &ft.duplicates, &[1, 3]).unwrap();
        let mut host = distribute(&layer, &ft.duplicates, &map).unwrap();
        let gathered = gather_embedded(&host, &map).unwrap();
        for (g, d) in gathered.iter().zip(&ft.duplicates) {
            for c in [0, 2] {
                assert_eq!(g.pos.stored.column(c), d.pos.stored.column(c));
                assert_eq!(g.neg.stored.column(c), d.neg.stored.column(c));
            }
        }
        assert_eq!(
            physical_columns(&host.planes),
            physical_columns(&layer.planes)
        );

        let a = map.assignments[1];
        let slot = &mut host.planes[a.host_plane].neg;
        let flipped = 1 - slot.stored.get(2, a.host_col);
        slot.faults.insert(2, a.host_col, flipped);
        let gathered = gather_embedded(&host, &map).unwrap();
        let got = gathered[a.copy - 2].neg.stored.get(2, a.source_col);
        assert_eq!(
            got,
            host.planes[a.host_plane]
                .neg
                .effective_cell(2, a.host_col)
                .unwrap()
        );
    }

    #[test]
    fn fault_free_embedded_equals_matvec() {
        let layer = pruned_layer();
        let cfg = FtConfig::default();
        let ft = duplicate_msb(&layer, &cfg, StreamBase::default()).unwrap();
        let map = plan_embedding(&layer, &ft.duplicates, &[1, 3]).unwrap();
        let host = distribute(&layer, &ft.duplicates, &map).unwrap();
        let x = [0.5, -1.5, 2.0];
        let got = infer_layer_embedded(&host, &map, &cfg, &x).unwrap();
        assert_eq!(got, layer_matvec(&layer, &x).unwrap());
        assert_eq!((got[1], got[3]), (0.0, 0.0));
    }

    #[test]
    fn translated_faults_give_identical_outputs() {
        let layer = pruned_layer();
        let cfg = FtConfig {
            fault: FaultModel::with_rate(0.2, 17).unwrap(),
            ..FtConfig::default()
        };
        let clean = duplicate_msb(&layer, &FtConfig::default(), StreamBase::default()).unwrap();
        let map = plan_embedding(&layer, &clean.duplicates, &[1, 3]).unwrap();
        let mut host = distribute(&layer, &clean.duplicates, &map).unwrap();
        host.inject_faults(&cfg.fault, 0, 0);
        assert!(host.total_faults() > 0);
        let ft = translate_faults(&layer, &host, &map).unwrap();
        let x = [0.25, 1.0, -0.75];
        let a = infer_layer_embedded(&host, &map, &cfg, &x).unwrap();
        let mut b = infer_layer_ft(&ft, &x).unwrap();
        for &j in &map.index {
            b[j] = 0.0;
        }
        assert_eq!(a, b);
    }
}
