//! Subcommand bodies: each returns its check records and a JSON result.

use cbdlab_core::commutators::{log_distance_multiplier, lp_commutator_report, SymbolPair};
use cbdlab_core::domination::{cbd_pipeline, random_function, weighted_opnorm_bounds, KernelOperator, PipelineConfig};
use cbdlab_core::norms::{dual_exponent, format_exponent};
use cbdlab_core::sparse::{equivalence_report, holds};
use cbdlab_core::verify::{self, CheckRecord};
use cbdlab_core::weights::{a2, ainfty_matrix, default_battery, make_weight};
use cbdlab_core::{DyadicGrid, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{pair_form, CommutatorKind, ExperimentConfig};

pub struct Outcome {
    pub checks: Vec<CheckRecord>,
    pub result: Value,
}

fn grid(cfg: &ExperimentConfig) -> Result<DyadicGrid> {
    DyadicGrid::new(cfg.grid.dim.0, cfg.depth())
}

fn rng(cfg: &ExperimentConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed)
}

pub fn verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut vc = cfg.verify.clone();
    vc.seed = cfg.seed;
    let suites = verify::run_all(&vc)?;
    let checks = suites
        .iter()
        .flat_map(|s| {
            s.checks.iter().map(move |c| CheckRecord { anchor: format!("{}: {}", s.suite, c.anchor), ..c.clone() })
        })
        .collect();
    Ok(Outcome { checks, result: json!({ "config": vc, "suites": suites }) })
}

pub fn dominate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = grid(cfg)?;
    let t = KernelOperator::new(cfg.operator(), grid)?;
    let (n, m, r) = (cfg.n(), cfg.values.m.0, cfg.values.r.0);
    let mut rng = rng(cfg);
    let f = random_function(grid, n, m, r, &mut rng);
    let g = random_function(grid, n, m, dual_exponent(r), &mut rng);
    let pc = PipelineConfig { epsilon: cfg.pipeline.epsilon.get_ref().0, mvee_tol: cfg.pipeline.mvee_tol.0 };
    let rep = cbd_pipeline(&t, &f, &g, &pc)?;

    let mut dom = CheckRecord::new("sparse domination: |t(f,g)| ≤ C_n Σ_S |S| dot(avL1(3S), avL1(S))");
    dom.note(rep.lhs, rep.rhs, rep.dominated);
    let mut sparse = CheckRecord::new("pipeline family is (1−nε)-sparse");
    sparse.note(1.0 - rep.epsilon_n, rep.sparse_check.min_ratio, rep.sparse_check.ok);
    let mut mass = CheckRecord::new("exceptional mass: Σ|Q_k| ≤ nε|Q|");
    mass.observe(rep.max_mass_fraction, rep.epsilon_n);
    let mut tele = CheckRecord::new("telescoping identity within 1e-10");
    tele.observe(rep.telescoping_error, 1e-10 * rep.lhs.max(1.0));
    let mut leaf = CheckRecord::new("leaf-scale bound: |a_S| ≤ ‖T‖ n m 3^{d/2} ‖f‖∞‖g‖∞ |S|");
    leaf.observe(rep.limit_ratio, 1.0);

    let result = json!({
        "grid": { "dim": grid.dim(), "depth": grid.depth() },
        "size_constant": t.size_constant(),
        "l2_norm": t.l2_norm(),
        "report": rep,
    });
    Ok(Outcome { checks: vec![dom, sparse, mass, tele, leaf], result })
}

pub fn weights(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = grid(cfg)?;
    let specs = cfg.weights.specs.clone().unwrap_or_else(default_battery);
    let t = if cfg.weights.operator_norms { Some(KernelOperator::new(cfg.operator(), grid)?) } else { None };
    let (m, r) = (cfg.values.m.0, cfg.values.r.0);
    let mut rec = CheckRecord::new("[W]_A∞ ≤ 4[W]_A2");
    let mut rows = Vec::new();
    for spec in &specs {
        let gen = make_weight(spec, grid)?;
        let w = &gen.weight;
        let a = a2(w);
        let ai = ainfty_matrix(w, cfg.weights.direction_count.0)?;
        rec.observe(ai, 4.0 * a);
        let norm = match &t {
            Some(t) => Some(weighted_opnorm_bounds(t, w, m, r, cfg.seed)?),
            None => None,
        };
        rows.push(json!({ "weight": spec.label(), "spec": spec, "flags": gen.flags, "a2": a, "ainfty": ai, "operator_norm": norm }));
    }
    let result = json!({
        "grid": { "dim": grid.dim(), "depth": grid.depth() },
        "operator": t.as_ref().map(|t| t.spec().label()),
        "inner": { "m": m, "r": format_exponent(r) },
        "weights": rows,
    });
    Ok(Outcome { checks: vec![rec], result })
}

pub fn commutator(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = grid(cfg)?;
    let t = KernelOperator::new(cfg.operator(), grid)?;
    let c = &cfg.commutator;
    let mut rng = rng(cfg);
    let mut b = || log_distance_multiplier(&grid, c.centres.0, &mut rng);
    let pair = match c.kind {
        CommutatorKind::Classical => SymbolPair::classical(grid, b())?,
        CommutatorKind::Iterated => SymbolPair::iterated(grid, b(), *c.k.get_ref())?,
        CommutatorKind::Mixed => SymbolPair::mixed(grid, b(), b())?,
        CommutatorKind::Power => SymbolPair::power(grid, b(), c.alpha, c.beta)?,
    };
    let rep = lp_commutator_report(&t, &pair, c.s.0, c.t.0, c.p.get_ref().0, cfg.seed)?;

    let mut two_sided = CheckRecord::new("L^p norm lower bound ≤ sparse upper bound");
    two_sided.observe(rep.lower, rep.upper);
    let mut dom = CheckRecord::new("sparse domination of the lifted extremal pair");
    dom.note(rep.form, rep.form_bound, rep.dominated);
    let mut holder = CheckRecord::new("dot_S ≤ A(S×3S)·‖f‖_{avL^{t'}(3S)}‖g‖_{avL^{s'}(S)}");
    holder.observe(rep.mixed_holder_worst, 1.0);
    let mut maximal = CheckRecord::new("rescaled dyadic maximal function bound");
    for mc in &rep.maximal {
        maximal.note(mc.ratio, mc.bound, mc.ok);
    }
    let mut checks = vec![two_sided, dom, holder, maximal];
    if let Some(ok) = rep.constants.mixed_bound_ok {
        let k = &rep.constants;
        let mut mixed = CheckRecord::new("mixed commutator symbol: A_s ≤ 2(T_s + S_s)");
        mixed.note(k.a_st, 2.0 * (k.t_s.unwrap_or(0.0) + k.s_s.unwrap_or(0.0)), ok && holds(k.a_st, 2.0 * (k.t_s.unwrap_or(0.0) + k.s_s.unwrap_or(0.0))));
        checks.push(mixed);
    }
    Ok(Outcome { checks, result: json!({ "operator": t.spec().label(), "report": rep }) })
}

pub fn equivalence(cfg: &ExperimentConfig) -> Result<Outcome> {
    let grid = grid(cfg)?;
    let pf = pair_form(cfg).map_err(|(_, m)| cbdlab_core::Error::InvalidParameter(m))?;
    let n = cfg.n();
    let mut rng = rng(cfg);
    let mut easy = CheckRecord::new("sparse form ≤ (1/δ)·‖sup_Q 1_Q dot_Q‖_L1");
    let mut hard = CheckRecord::new("‖sup_Q 1_Q dot_Q‖_L1 ≤ A·sparse form over the stopping family");
    let mut runs = Vec::new();
    for _ in 0..cfg.equivalence.instances.0 {
        let f = random_function(grid, n, 1, 2.0, &mut rng);
        let g = random_function(grid, n, 1, 2.0, &mut rng);
        let (rep, _) = equivalence_report(&f, &g, &pf)?;
        easy.note(rep.sparse_form, rep.maximal_l1 / rep.delta, rep.easy_pass);
        hard.note(rep.maximal_l1, rep.threshold * rep.sparse_form, rep.hard_pass);
        runs.push(rep);
    }
    let result = json!({ "grid": { "dim": grid.dim(), "depth": grid.depth() }, "pair_form": pf, "runs": runs });
    Ok(Outcome { checks: vec![easy, hard], result })
}
