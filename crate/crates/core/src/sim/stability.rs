use std::fmt;

use crate::network::ModuleId;

use super::program::{LiaLaw, MatLaw, SimProgram, B_SIDE};

pub const STABILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    /// Repeated root on the unit circle: bounded only for special initial states.
    Marginal,
    Unstable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Stable => "stable",
            Verdict::Marginal => "marginal",
            Verdict::Unstable => "unstable",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityEntry {
    pub module: ModuleId,
    pub k_over_m: f64,
    pub z_over_m: f64,
    pub radius: f64,
    pub verdict: Verdict,
    /// A buffer or table interaction contributed at its worst-case linearisation.
    pub advisory: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StabilityReport {
    pub entries: Vec<StabilityEntry>,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.entries.iter().all(|e| e.verdict != Verdict::Unstable)
    }

    pub fn unstable(&self) -> impl Iterator<Item = &StabilityEntry> {
        self.entries.iter().filter(|e| e.verdict == Verdict::Unstable)
    }
}

impl fmt::Display for StabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(
                f,
                "module {}: K/M={:?} Z/M={:?} radius={:?} {}{}",
                e.module,
                e.k_over_m,
                e.z_over_m,
                e.radius,
                e.verdict,
                if e.advisory { " (advisory)" } else { "" }
            )?;
        }
        Ok(())
    }
}

/// Spectral radius of `[[2 − k − z, z − 1], [1, 0]]` and whether its
/// eigenvalues coincide.
pub fn companion_radius(k: f64, z: f64) -> (f64, bool) {
    let a = 2.0 - k - z;
    let b = z - 1.0;
    // λ² − aλ − b = 0; a² + 4b rewritten to avoid cancellation near k = 0
    let disc = (k + z) * (k + z) - 4.0 * k;
    if disc < 0.0 {
        return ((-b).sqrt(), false);
    }
    let root = disc.sqrt();
    let r1 = (a + a.signum() * root) / 2.0;
    let r2 = if r1 != 0.0 { -b / r1 } else { 0.0 };
    (r1.abs().max(r2.abs()), disc <= STABILITY_TOLERANCE)
}

fn verdict(radius: f64, repeated: bool) -> Verdict {
    if radius > 1.0 + STABILITY_TOLERANCE {
        Verdict::Unstable
    } else if radius >= 1.0 - STABILITY_TOLERANCE && repeated {
        Verdict::Marginal
    } else {
        Verdict::Stable
    }
}

/// Linearised per-material stability of a compiled program.
///
/// Every MAS/CEL is checked against the sum of the linear stiffness and
/// damping of its incident interactions, as if its neighbours were fixed.
/// Buffers and table links are taken at whichever of their linearisations
/// gives the largest radius, and the entry is marked advisory.
pub fn stability_check(p: &SimProgram) -> StabilityReport {
    let mut entries = Vec::new();
    for (i, law) in p.mat_laws.iter().enumerate() {
        let MatLaw::Dynamic { c1, c2, mass } = *law else { continue };
        // c1 = 2 − K/M − Z/M, c2 = Z/M − 1
        let mut z = c2 + 1.0;
        let mut k = 2.0 - c1 - z;
        // (k, z) alternatives contributed by nonlinear links
        let mut options: Vec<Vec<(f64, f64)>> = Vec::new();
        for &e in p.incident_of(i) {
            match p.lia_laws[(e & !B_SIDE) as usize] {
                LiaLaw::Spring { k: lk } => k += lk / mass,
                LiaLaw::Damper { z: lz } => z += lz / mass,
                LiaLaw::SpringDamper { k: lk, z: lz } => {
                    k += lk / mass;
                    z += lz / mass;
                }
                LiaLaw::Buffer { k: lk, z: lz, .. } => options.push(vec![(0.0, 0.0), (lk / mass, lz / mass)]),
                LiaLaw::Table(t) => {
                    let (fk, fz) = &p.tables[t as usize];
                    let (klo, khi) = fk.slope_range();
                    let (zlo, zhi) = fz.slope_range();
                    let mut opts = Vec::new();
                    for ks in [klo, khi] {
                        for zs in [zlo, zhi] {
                            // a force slope of −K corresponds to stiffness K
                            opts.push((-ks / mass, -zs / mass));
                        }
                    }
                    options.push(opts);
                }
            }
        }
        let advisory = !options.is_empty();
        let (mut kw, mut zw) = (k, z);
        let (mut radius, mut repeated) = companion_radius(k, z);
        for opts in &options {
            // choose greedily the alternative that maximises the radius
            let mut best = (kw, zw, radius, repeated);
            for &(dk, dz) in opts {
                let (r, rep) = companion_radius(kw + dk, zw + dz);
                if r > best.2 {
                    best = (kw + dk, zw + dz, r, rep);
                }
            }
            (kw, zw, radius, repeated) = best;
        }
        entries.push(StabilityEntry {
            module: p.mat_ids[i],
            k_over_m: kw,
            z_over_m: zw,
            radius,
            verdict: verdict(radius, repeated),
            advisory,
        });
    }
    StabilityReport { entries }
}
