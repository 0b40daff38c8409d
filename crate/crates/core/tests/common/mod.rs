//! Test oracles and random instance generators shared by the integration
//! tests of both crates.
#![allow(dead_code)]

use graphcloak_core::gnn::{Arch, GnnModel, GraphInput, Mode, ModelSpec};
use graphcloak_core::graph::{Adjacency, Graph, GraphDataset};
use graphcloak_core::{seeded_rng, Rng};
use rand::Rng as _;

pub const FD_STEP: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-8;

pub fn random_graph(rng: &mut Rng, n: usize, feature_dim: usize, classes: usize, density: f64) -> Graph {
    let mut adj = Adjacency::empty(n);
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < density {
                adj.set(u, v, true);
            }
        }
    }
    let features = (0..n).map(|_| rng.random_range(0..feature_dim)).collect();
    Graph::new(adj, features, feature_dim, rng.random_range(0..classes)).unwrap()
}

/// A random dataset whose graphs have between `min_n` and `max_n` nodes, with
/// every class represented at least 3 times and a stratified 80/10/10 split.
pub fn random_dataset(rng: &mut Rng, graphs: usize, min_n: usize, max_n: usize, feature_dim: usize, classes: usize) -> GraphDataset {
    let mut list: Vec<Graph> = (0..graphs)
        .map(|i| {
            let n = rng.random_range(min_n..=max_n);
            let density = rng.random_range(0.1..0.6);
            let g = random_graph(rng, n, feature_dim, classes, density);
            Graph::new(g.adjacency().clone(), g.feature_classes().to_vec(), feature_dim, i % classes).unwrap()
        })
        .collect();
    list.rotate_left(rng.random_range(0..graphs));
    let ds = GraphDataset::new("random", list, classes, feature_dim).unwrap();
    graphcloak_core::graph::split_dataset(&ds, [0.8, 0.1, 0.1], rng).unwrap()
}

/// Random model with non-zero biases and (for GIN) non-zero ε, so every
/// parameter block carries gradient signal.
pub fn random_model(arch: Arch, input_dim: usize, classes: usize, rng: &mut Rng) -> GnnModel {
    let spec = ModelSpec::new(arch, input_dim, classes);
    let mut model = GnnModel::new(spec, rng).unwrap();
    let blocks: Vec<_> = model.layout().iter().filter(|p| !p.name.ends_with(".weight")).map(|p| p.range()).collect();
    let theta = model.params_mut();
    for r in blocks {
        for x in &mut theta[r] {
            *x = rng.random_range(-0.3..0.3);
        }
    }
    model
}

/// Eval-mode loss and the discrete branch pattern it went through.
pub fn probe(model: &GnnModel, input: &GraphInput, label: usize) -> (f64, Vec<usize>) {
    let fwd = model.forward(input, Mode::Eval).unwrap();
    let loss = graphcloak_core::gnn::cross_entropy(&fwd.logits, label).unwrap();
    (loss, fwd.cache.branch_signature())
}

/// Central difference `(L(x+h) − L(x−h)) / 2h`, or `None` when either side
/// crosses a ReLU or median kink relative to the base point.
pub fn central_difference(
    base_sig: &[usize],
    mut eval: impl FnMut(f64) -> (f64, Vec<usize>),
) -> Option<f64> {
    let (plus, sp) = eval(FD_STEP);
    let (minus, sm) = eval(-FD_STEP);
    (sp == base_sig && sm == base_sig).then(|| (plus - minus) / (2.0 * FD_STEP))
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff < ABS_FLOOR {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

#[derive(Debug, Default, Clone)]
pub struct FdReport {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
    pub max_abs_diff: f64,
    pub worst: String,
}

impl FdReport {
    fn record(&mut self, what: String, analytic: f64, numeric: Option<f64>) {
        match numeric {
            None => self.skipped += 1,
            Some(num) => {
                self.checked += 1;
                self.max_abs_diff = self.max_abs_diff.max((analytic - num).abs());
                let e = relative_error(analytic, num);
                if e > self.max_rel_error {
                    self.max_rel_error = e;
                    self.worst = format!("{what}: analytic {analytic:e}, numeric {num:e}");
                }
            }
        }
    }

    pub fn merge(&mut self, other: FdReport) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        self.max_abs_diff = self.max_abs_diff.max(other.max_abs_diff);
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
    }
}

/// Compares every feature entry, every adjacency pair (when `with_adjacency`)
/// and `theta_probes` random parameter coordinates against central finite
/// differences.
pub fn fd_check(model: &GnnModel, g: &Graph, with_adjacency: bool, theta_probes: usize, rng: &mut Rng) -> FdReport {
    let input = GraphInput::from_graph(g);
    let label = g.label();
    let grads = model.gradients(&input, label).unwrap();
    let (_, base_sig) = probe(model, &input, label);
    let mut report = FdReport::default();

    for v in 0..input.features.rows() {
        for j in 0..input.features.cols() {
            let num = central_difference(&base_sig, |h| {
                let mut x = input.clone();
                x.features[(v, j)] += h;
                probe(model, &x, label)
            });
            report.record(format!("dX[{v},{j}]"), grads.d_features[(v, j)], num);
        }
    }
    if with_adjacency {
        let n = input.adjacency.rows();
        for u in 0..n {
            for v in (u + 1)..n {
                let num = central_difference(&base_sig, |h| {
                    let mut x = input.clone();
                    x.adjacency[(u, v)] += h;
                    x.adjacency[(v, u)] += h;
                    probe(model, &x, label)
                });
                report.record(format!("dA[{u},{v}]"), grads.d_adjacency[(u, v)], num);
            }
        }
    }
    let count = model.param_count();
    for _ in 0..theta_probes {
        let k = rng.random_range(0..count);
        let num = central_difference(&base_sig, |h| {
            let mut m = model.clone();
            m.params_mut()[k] += h;
            probe(&m, &input, label)
        });
        report.record(format!("dθ[{k}]"), grads.d_theta[k], num);
    }
    report
}

/// Runs [`fd_check`] on `graphs` random 8-node graphs for one architecture.
pub fn gradient_oracle(arch: Arch, graphs: usize, seed: u64) -> FdReport {
    let mut rng = seeded_rng(seed);
    let (d, classes) = (4, 3);
    let mut total = FdReport::default();
    for _ in 0..graphs {
        let density = rng.random_range(0.2..0.6);
        let g = random_graph(&mut rng, 8, d, classes, density);
        let model = random_model(arch, d, classes, &mut rng);
        total.merge(fd_check(&model, &g, true, 40, &mut rng));
    }
    total
}

/// Outcome of the GradArgMax ranking oracle over many frozen-model trials.
#[derive(Debug, Default, Clone, Copy)]
pub struct RankingReport {
    pub trials: usize,
    pub top1_agree: usize,
    pub first_order_ok: usize,
}

/// For random 5-node graphs and a frozen GCN: compares the top pair by
/// `|analytic gradient|` with the top pair by `|finite-difference slope|`,
/// and checks that the flip actually applied by a one-flip EMinS step has a
/// non-positive first-order loss estimate.
pub fn ranking_oracle(trials: usize, seed: u64) -> RankingReport {
    use graphcloak_core::cloak::{emins_step, rank_pairs};
    let mut rng = seeded_rng(seed);
    let (d, classes) = (3, 2);
    let mut report = RankingReport::default();
    for _ in 0..trials {
        let g = random_graph(&mut rng, 5, d, classes, 0.5);
        let model = random_model(Arch::Gcn, d, classes, &mut rng);
        let input = GraphInput::from_graph(&g);
        let grad = model.gradients(&input, g.label()).unwrap().d_adjacency;
        let top_analytic = rank_pairs(&grad)[0];

        let slope = |u: usize, v: usize| {
            let eval = |h: f64| {
                let mut x = input.clone();
                x.adjacency[(u, v)] += h;
                x.adjacency[(v, u)] += h;
                model.loss(&x, g.label()).unwrap()
            };
            (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP)
        };
        let mut best = 0.0f64;
        for u in 0..5 {
            for v in (u + 1)..5 {
                best = best.max(slope(u, v).abs());
            }
        }
        // Automorphic pairs tie exactly; any member of the tied top set counts.
        let chosen = slope(top_analytic.0, top_analytic.1).abs();
        report.trials += 1;
        report.top1_agree += usize::from(chosen >= best * (1.0 - 1e-6));

        let out = emins_step(&model, &g, &g, 1).unwrap();
        let mut ok = true;
        for u in 0..5 {
            for v in (u + 1)..5 {
                if out.has_edge(u, v) != g.has_edge(u, v) {
                    let change = if out.has_edge(u, v) { 1.0 } else { -1.0 };
                    ok &= change * grad[(u, v)] <= 0.0;
                }
            }
        }
        report.first_order_ok += usize::from(ok);
    }
    report
}

/// Budget violations and invariant failures of one method over a dataset.
#[derive(Debug, Default, Clone, Copy)]
pub struct SafetyReport {
    pub graphs: usize,
    pub over_budget: usize,
    pub invalid: usize,
    pub changed: usize,
}

/// Cloaks `ds` with `method` (short surrogate loop with a final pass so that
/// every poisoned graph is perturbed) and audits every output graph.
pub fn budget_safety(ds: &GraphDataset, method: graphcloak_core::cloak::Method, seed: u64) -> SafetyReport {
    use graphcloak_core::budget::graph_budget;
    use graphcloak_core::cloak::{cloak, CloakJob};
    let mut job = CloakJob::new(method, seed);
    job.n_steps = 5;
    job.train.batch_size = 16;
    job.final_pass = true;
    let out = cloak(ds, &job).unwrap();
    let mut report = SafetyReport::default();
    for (orig, new) in ds.graphs.iter().zip(&out.dataset.graphs) {
        report.graphs += 1;
        if method.cost(new, orig) > graph_budget(orig, job.beta) {
            report.over_budget += 1;
        }
        if new.check_invariants().is_err() || new.label() != orig.label() {
            report.invalid += 1;
        }
        report.changed += usize::from(new != orig);
    }
    for u in &out.usage {
        if u.used > u.budget {
            report.over_budget += 1;
        }
    }
    report
}
