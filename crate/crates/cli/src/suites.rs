use crate::config::{BottomShape, ScenarioConfig};
use kreinlab_core::dirichlet::{poisson_adjoint_check, poisson_decay, remainder_decay, resolvent_decay, standard_suite, DecayFit, Pairing, RaySpec};
use kreinlab_core::dtn::*;
use kreinlab_core::elliptic::{greens_identity_residual, CoefficientField, CoefficientKind, EllipticOperator};
use kreinlab_core::extension::*;
use kreinlab_core::geometry::{build_diffeo, BoundaryGraph};
use kreinlab_core::linalg::{c64, complement, observed_order, orthonormalize, span_sum, subspace_distance};
use kreinlab_core::psdo::{symbol_band_fit, symbol_band_norm, symbol_smooth, SymbolField, SymbolKind};
use kreinlab_core::{Component, GridSpec, Result, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// recorded for reference, never affects the verdict
    Info,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Info => "INFO",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub status: Status,
}

fn at_most(name: &str, value: f64, bound: f64) -> Check {
    Check { name: name.into(), value, threshold: format!("<= {bound:e}"), status: if value <= bound { Status::Pass } else { Status::Fail } }
}

fn at_least(name: &str, value: f64, bound: f64) -> Check {
    Check { name: name.into(), value, threshold: format!(">= {bound}"), status: if value >= bound { Status::Pass } else { Status::Fail } }
}

fn info(name: &str, value: f64, note: &str) -> Check {
    Check { name: name.into(), value, threshold: note.into(), status: Status::Info }
}

#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: vec![] }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip representation, stable across runs.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub name: String,
    pub table: Table,
    pub checks: Vec<Check>,
}

impl SuiteResult {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    fn failed(name: &str, err: kreinlab_core::Error) -> Self {
        let mut table = Table::new(&["error"]);
        table.push(vec![err.to_string()]);
        SuiteResult { name: name.into(), table, checks: vec![Check { name: "runtime".into(), value: f64::NAN, threshold: err.to_string(), status: Status::Fail }] }
    }
}

pub fn run_suite(name: &str, cfg: &ScenarioConfig) -> SuiteResult {
    let out = match name {
        "extension-oracle" => extension_oracle(cfg),
        "green" => green(cfg),
        "dirichlet" => dirichlet(cfg),
        "decay" => decay(cfg),
        "smoothing" => smoothing(cfg),
        "dtn" => dtn(cfg),
        "krein" => krein(cfg),
        "regularity" => regularity(cfg),
        _ => unreachable!("suite names are validated with the config"),
    };
    match out {
        Ok((table, checks)) => SuiteResult { name: name.into(), table, checks },
        Err(e) => SuiteResult::failed(name, e),
    }
}

type Outcome = Result<(Table, Vec<Check>)>;

pub fn operator(cfg: &ScenarioConfig, nt: usize, nn: usize) -> Result<Arc<EllipticOperator>> {
    let geo = &cfg.geometry;
    let grid = GridSpec::new(geo.period, nt, nn, geo.extent)?;
    let bottom = match &geo.bottom {
        BottomShape::Flat => BoundaryGraph::from_fn(geo.period, nt, geo.m, geo.p, |_| 0.0)?,
        BottomShape::Sine { amplitude, mode } => {
            let k = 2.0 * PI * *mode as f64 / geo.period;
            BoundaryGraph::from_fn(geo.period, nt, geo.m, geo.p, |x| amplitude * (k * x).sin())?
        }
        BottomShape::Samples { values } => BoundaryGraph::new(geo.period, values.clone(), geo.m, geo.p)?.resample(nt),
    };
    let d = build_diffeo(&grid, &bottom, None)?;
    let c = CoefficientField::from_spec(&cfg.coefficients, &d)?;
    Ok(Arc::new(EllipticOperator::new(c, &d)?))
}

/// The realization of the config, with subspace mode built from the
/// equivalent Neumann-type condition on the same grid.
fn neumann_spec(cfg: &ScenarioConfig) -> RealizationSpec {
    let mut s = cfg.realization.clone();
    s.mode = RealizationMode::NeumannType;
    s.subspace = None;
    s
}

fn realization(cfg: &ScenarioConfig, op: &Arc<EllipticOperator>) -> Result<Realization> {
    let base = Realization::new(op, neumann_spec(cfg))?;
    match cfg.realization.mode {
        RealizationMode::NeumannType => Ok(base),
        RealizationMode::Subspace => Realization::new(op, neumann_to_subspace(&base)?),
    }
}

fn is_flat(cfg: &ScenarioConfig) -> bool {
    match &cfg.geometry.bottom {
        BottomShape::Flat => true,
        BottomShape::Sine { amplitude, .. } => *amplitude == 0.0,
        BottomShape::Samples { values } => values.iter().all(|v| *v == values[0]),
    }
}

fn lambdas(cfg: &ScenarioConfig) -> Vec<C64> {
    cfg.sweep.lambdas.iter().map(|[re, im]| c64(*re, *im)).collect()
}

fn rungs(cfg: &ScenarioConfig) -> Vec<(usize, usize)> {
    cfg.sweep.mesh_ladder.iter().map(|&n| (n, n + 1)).collect()
}

fn rng(cfg: &ScenarioConfig, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
    r.set_stream(stream);
    r
}

/// Low Fourier modes in x' times 1, sin(y + 0.3) and exp(-y) in the height,
/// with random complex coefficients. The height profiles are not polynomial,
/// so second-order traces and quadratures are not exact on them.
struct SmoothField {
    terms: Vec<(i32, usize, C64)>,
}

impl SmoothField {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut terms = vec![];
        for k in -2..=2 {
            for p in 0..3 {
                terms.push((k, p, c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
            }
        }
        SmoothField { terms }
    }

    fn sample(&self, op: &EllipticOperator) -> Vec<C64> {
        let w = 2.0 * PI / op.grid.period();
        (0..op.grid.len())
            .map(|k| {
                let (x, y) = op.geom.point(k);
                let prof = [1.0, (y + 0.3).sin(), (-y).exp()];
                self.terms.iter().map(|&(m, p, c)| c * C64::from_polar(1.0, m as f64 * w * x) * prof[p]).sum()
            })
            .collect()
    }

    fn boundary(&self, op: &EllipticOperator) -> Vec<C64> {
        self.sample(op)[..op.grid.nt()].to_vec()
    }
}

fn extension_oracle(cfg: &ScenarioConfig) -> Outcome {
    let mut rng = rng(cfg, 1);
    let lambda = c64(0.4, 0.9);
    let mut t = Table::new(&["trial", "n", "d", "extra", "round_trip", "kernel_range", "t_form", "m_form", "diagram", "m_vs_f", "m_vs_tg"]);
    let mut worst = [0.0f64; 7];
    for trial in 0..cfg.oracle_pairs {
        let n = rng.gen_range(4..=12);
        let d = rng.gen_range(1..=(n / 3).max(1));
        let pair = DualPair::random(&mut rng, n, d)?;
        let extra = rng.gen_range(0..=d);
        let a = random_realization(&mut rng, &pair, extra);
        let corr = realization_to_t(&pair, &a)?;
        let round_trip = t_to_realization(&pair, &corr)?.distance(&a);
        let ker = subspace_distance(&orthonormalize(&a.kernel()), &corr.kernel());
        let ran = subspace_distance(&orthonormalize(&a.range()), &span_sum(&corr.range(), &complement(&corr.w_basis, n)));
        let square = random_realization(&mut rng, &pair, d);
        let rep = krein_resolvent_check(&pair, &square, lambda)?;

        let z = pair.z(c64(0.0, 0.0));
        let zp = pair.z_prime(c64(0.0, 0.0));
        let tm = random_matrix(&mut rng, zp.ncols(), z.ncols());
        let full = Correspondence { t_graph: SubspaceGraph::from_parts(&z, &(&zp * &tm)), t_matrix: tm, v_basis: z, w_basis: zp };
        let frep = krein_resolvent_check(&pair, &t_to_realization(&pair, &full)?, lambda)?;
        let m_vs_f = frep.m_vs_f.unwrap_or(f64::INFINITY);
        let row = [round_trip, ker.max(ran), rep.t_form, rep.m_form, rep.diagram, m_vs_f, frep.m_vs_tg];
        for (w, v) in worst.iter_mut().zip(row) {
            *w = w.max(v);
        }
        let mut cells = vec![trial.to_string(), n.to_string(), d.to_string(), extra.to_string()];
        cells.extend(row.iter().map(|v| num(*v)));
        t.push(cells);
    }
    let checks = vec![
        at_most("round_trip", worst[0], 1e-10),
        at_most("kernel_range", worst[1], 1e-10),
        at_most("t_form", worst[2], 1e-9),
        at_most("m_form", worst[3], 1e-9),
        at_most("diagram", worst[4], 1e-10),
        at_most("m_vs_f", worst[5], 1e-10),
        at_most("m_vs_tg", worst[6], 1e-10),
    ];
    Ok((t, checks))
}

fn green(cfg: &ScenarioConfig) -> Outcome {
    let mut rng = rng(cfg, 2);
    let (fu, fv) = (SmoothField::random(&mut rng), SmoothField::random(&mut rng));
    let mut t = Table::new(&["nt", "nn", "classical", "modified", "modified_discrete", "kappa_omitted"]);
    let (mut classical, mut modified, mut control, mut exact) = (vec![], vec![], vec![], 0.0f64);
    for (nt, nn) in rungs(cfg) {
        let op = operator(cfg, nt, nn)?;
        let (u, v) = (fu.sample(&op), fv.sample(&op));
        let c = greens_identity_residual(&op, &u, &v, true);
        let m = modified_green_residual(&op, &u, &v, GreenPairing::Quadrature)?;
        let e = modified_green_residual(&op, &u, &v, GreenPairing::Discrete)?;
        let k = greens_identity_residual(&op, &u, &v, false);
        t.push(vec![nt.to_string(), nn.to_string(), num(c), num(m), num(e), num(k)]);
        classical.push(c);
        modified.push(m);
        control.push(k);
        exact = exact.max(e);
    }
    let mut checks = vec![
        at_least("classical_order", observed_order(&classical, 2.0), 1.8),
        at_least("modified_order", observed_order(&modified, 2.0), 1.8),
        at_most("modified_discrete", exact, 1e-9),
    ];
    let ko = observed_order(&control, 2.0);
    if is_flat(cfg) {
        checks.push(info("kappa_omitted_order", ko, "kappa = 1 on a flat boundary, control not applicable"));
    } else {
        let last = control.len() - 1;
        let stalls = ko < 1.0 && control[last] > 10.0 * classical[last];
        checks.push(Check {
            name: "kappa_omitted_order".into(),
            value: ko,
            threshold: "< 1 and finest residual > 10x classical".into(),
            status: if stalls { Status::Pass } else { Status::Fail },
        });
    }
    Ok((t, checks))
}

fn dirichlet(cfg: &ScenarioConfig) -> Outcome {
    let mut rng = rng(cfg, 3);
    let (ff, fphi) = (SmoothField::random(&mut rng), SmoothField::random(&mut rng));
    let mut t = Table::new(&["lambda_re", "lambda_im", "nt", "nn", "discrete", "quadrature"]);
    let mut checks = vec![];
    let mut exact = 0.0f64;
    for lam in lambdas(cfg) {
        let mut quad = vec![];
        for (nt, nn) in rungs(cfg) {
            let op = operator(cfg, nt, nn)?;
            let (f, phi) = (ff.sample(&op), fphi.boundary(&op));
            let d = poisson_adjoint_check(&op, lam, &phi, &f, Component::Bottom, Pairing::Discrete)?;
            let q = poisson_adjoint_check(&op, lam, &phi, &f, Component::Bottom, Pairing::Quadrature)?;
            t.push(vec![num(lam.re), num(lam.im), nt.to_string(), nn.to_string(), num(d), num(q)]);
            exact = exact.max(d);
            quad.push(q);
        }
        checks.push(at_least(&format!("quadrature_order@{}{:+}i", lam.re, lam.im), observed_order(&quad, 2.0), 1.8));
    }
    checks.insert(0, at_most("discrete_residual", exact, 1e-8));
    Ok((t, checks))
}

fn decay(cfg: &ScenarioConfig) -> Outcome {
    let [nt, nn] = cfg.sweep.decay_grid;
    let op = operator(cfg, nt, nn)?;
    let ray = RaySpec::new(cfg.sweep.ray.angle, cfg.sweep.ray.mu.clone());
    let fits = [
        resolvent_decay(&op, &ray, 20)?,
        poisson_decay(&op, &ray, &[0, 1, 2, 4])?,
        remainder_decay(&op, &ray, &standard_suite(&op))?,
    ];
    let mut t = Table::new(&["quantity", "mu", "lambda_re", "lambda_im", "norm", "fit_residual"]);
    for f in &fits {
        push_fit(&mut t, f);
    }
    let theta = cfg.tau().min(1.0);
    let checks = vec![
        at_most("resolvent_slope", fits[0].slope, -0.9),
        at_most("poisson_slope", fits[1].slope, -0.4),
        at_most("remainder_slope", fits[2].slope, -0.8 * theta),
    ];
    Ok((t, checks))
}

fn push_fit(t: &mut Table, f: &DecayFit) {
    for (row, res) in f.rows.iter().zip(&f.residuals) {
        t.push(vec![f.name.clone(), num(row.mu), num(row.lambda_re), num(row.lambda_im), num(row.value), num(*res)]);
    }
}

fn smoothing(cfg: &ScenarioConfig) -> Outcome {
    let (n, delta, tau) = match &cfg.smoothing {
        Some(s) => (s.n, s.delta, s.tau),
        None => (256, 0.5, cfg.tau()),
    };
    let g = GridSpec::new(2.0 * PI, n, 8, 1.0)?;
    let mut rng = rng(cfg, 5);
    // lacunary profile with random phases: exactly C^tau
    let terms: Vec<(f64, f64)> = (1..).map(|k| 2f64.powi(k)).take_while(|f| *f < (n / 2) as f64).map(|f| (f, rng.gen_range(0.0..2.0 * PI))).collect();
    let a = move |x: f64| 1.0 + 0.5 * terms.iter().map(|(f, ph)| f.powf(-tau) * (f * x + ph).cos()).sum::<f64>();
    let p = SymbolField::from_fn(&g, 0.0, tau, SymbolKind::Boundary, move |x, _| c64(a(x), 0.0));
    let (sharp, flat) = symbol_smooth(&p, delta)?;
    let recon = p.values.iter().zip(&sharp.values).zip(&flat.values).map(|((a, b), c)| (a - b - c).norm()).fold(0.0, f64::max);
    let top = (n / 2).trailing_zeros() as usize;
    let bands: Vec<usize> = (1..top).collect();
    let fit = symbol_band_fit(&flat, &bands);
    let mut t = Table::new(&["band", "flat_norm", "sharp_norm"]);
    for (j, v) in bands.iter().zip(&fit.norms) {
        t.push(vec![j.to_string(), num(*v), num(symbol_band_norm(&sharp, *j))]);
    }
    let smooth = SymbolField::from_fn(&g, 0.0, tau, SymbolKind::Boundary, |x, _| c64(1.0 + 0.5 * x.cos(), 0.0));
    let (_, sflat) = symbol_smooth(&smooth, delta)?;
    let control = (0..top).map(|j| symbol_band_norm(&sflat, j)).fold(0.0, f64::max);
    let checks = vec![
        at_most("reconstruction", recon, 0.0),
        at_most("smooth_control", control, 1e-8),
        info("band_exponent", fit.order, &format!("target {} +- 20%; pre-asymptotic at this N", -tau * delta)),
    ];
    Ok((t, checks))
}

/// Bottom block of the flat-strip DtN symbol of -Delta + shift with a
/// Dirichlet top at height `l`.
fn flat_symbol(k: f64, shift: C64, l: f64) -> C64 {
    let s = (c64(k * k, 0.0) + shift).sqrt();
    if s.norm() < 1e-14 {
        return c64(-1.0 / l, 0.0);
    }
    -s / (s * l).tanh()
}

/// Symmetry of P and P' at the first lambda of the sweep; on the flat strip
/// with -Delta the assembled symbol at lambda = 0 is compared with the
/// closed form. The finite-volume trace leaves out the half-cell mass, so the
/// comparison is only second order at lambda = 0.
fn dtn(cfg: &ScenarioConfig) -> Outcome {
    let lam = lambdas(cfg)[0];
    let closed = is_flat(cfg) && matches!(cfg.coefficients.kind, CoefficientKind::Laplace) && cfg.coefficients.a0 == 0.0;
    let zero = c64(0.0, 0.0);
    let kmax = (cfg.sweep.mesh_ladder[0] / 4).min(16) as i64;
    let mut t = Table::new(&["nt", "nn", "k", "measured_symbol_re", "measured_symbol_im", "closed_form", "rel_error"]);
    let (mut errs, mut sym) = (vec![], 0.0f64);
    for (nt, nn) in rungs(cfg) {
        let op = operator(cfg, nt, nn)?;
        let p = dtn_assemble(&op, lam, Selection::Both, TraceKind::FiniteVolume)?;
        let pp = dtn_assemble_adjoint(&op, lam, Selection::Both, TraceKind::FiniteVolume)?;
        sym = sym.max(dtn_symmetry_defect(&p, &pp));
        if !closed {
            continue;
        }
        let p0 = if lam == zero { p } else { dtn_assemble(&op, zero, Selection::Both, TraceKind::FiniteVolume)? };
        let mut e = 0.0f64;
        for (k, s) in p0.mode_symbol(Component::Bottom, Component::Bottom)? {
            let exact = flat_symbol(k as f64 * 2.0 * PI / cfg.geometry.period, zero, cfg.geometry.extent);
            let rel = (s - exact).norm() / exact.norm();
            if k.abs() <= kmax {
                e = e.max(rel);
            }
            t.push(vec![nt.to_string(), nn.to_string(), k.to_string(), num(s.re), num(s.im), num(exact.re), num(rel)]);
        }
        errs.push(e);
    }
    let mut checks = vec![at_most("symmetry_defect", sym, 1e-10)];
    if closed {
        checks.push(at_least("closed_form_order", observed_order(&errs, 2.0), 1.8));
        checks.push(info("closed_form_error", errs[errs.len() - 1], &format!("max relative error for |k| <= {kmax} on the finest rung")));
    }
    Ok((t, checks))
}

fn krein(cfg: &ScenarioConfig) -> Outcome {
    let mut rng = rng(cfg, 7);
    let field = SmoothField::random(&mut rng);
    let mut t = Table::new(&["nt", "nn", "lambda_re", "lambda_im", "discrepancy", "m_condition", "sigma_min_ratio", "eigenvalue", "psi_defect", "h2_ratio"]);
    let (mut worst, mut psi, mut eig) = (0.0f64, 0.0f64, 0usize);
    for (nt, nn) in rungs(cfg) {
        let op = operator(cfg, nt, nn)?;
        let real = realization(cfg, &op)?;
        let f = field.sample(&op);
        for lam in lambdas(cfg) {
            let r = krein_solve(&real, lam, &f)?.report;
            t.push(vec![
                nt.to_string(),
                nn.to_string(),
                num(r.lambda_re),
                num(r.lambda_im),
                num(r.discrepancy),
                num(r.m_condition),
                num(r.sigma_min_ratio),
                r.eigenvalue.to_string(),
                num(r.psi_defect),
                num(r.h2_ratio),
            ]);
            if r.eigenvalue {
                eig += 1;
            } else {
                worst = worst.max(r.discrepancy);
                psi = psi.max(r.psi_defect);
            }
        }
    }
    let mut checks = vec![at_most("discrepancy", worst, 1e-8), at_most("psi_defect", psi, 1e-8)];
    if eig > 0 {
        checks.push(info("eigenvalues", eig as f64, "lambda values flagged as eigenvalues of the realization"));
    }
    Ok((t, checks))
}

fn regularity(cfg: &ScenarioConfig) -> Outcome {
    let lam = lambdas(cfg)[0];
    let spec = neumann_spec(cfg);
    let ell = {
        let (nt, nn) = rungs(cfg)[0];
        ellipticity_check(&*operator(cfg, nt, nn)?, &spec)?
    };
    let rep = regularity_study(|nt, nn| operator(cfg, nt, nn), &spec, lam, &rungs(cfg), 2.0)?;
    let mut t = Table::new(&["nt", "nn", "h2_ratio"]);
    for r in &rep.rows {
        t.push(vec![r.nt.to_string(), r.nn.to_string(), num(r.ratio)]);
    }
    let min_ratio = ell.iter().map(|r| r.min_ratio).fold(f64::INFINITY, f64::min);
    let checks = vec![
        info("ellipticity_margin", min_ratio, if rep.elliptic { "elliptic" } else { "not elliptic" }),
        at_most("h2_ratio_growth", rep.growth, 2.0),
    ];
    Ok((t, checks))
}
