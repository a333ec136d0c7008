//! The six optimizer drivers: three meta-algorithm variants that run their
//! base optimizer inside an adaptive hyper-ellipsoid local region with
//! bandit-selected categorical encoders, and the three plain baselines
//! (standard BO, trust-region, subspace-embedding) built from the same
//! components with the region machinery disabled.

pub mod embedding;
pub mod trust_region;

use crate::acquisition::{
    expected_improvement, interleaved_search, local_search, CandidatePool, PosteriorSampler,
};
use crate::benchmarks::Benchmark;
use crate::config::{DriverKind, RunConfig};
use crate::encode::{exp3_eta, fit_ordinal, fit_target, Encoder, EncoderKind, Exp3State};
use crate::error::{Error, Result};
use crate::hesp::{
    check_restart, in_region, lambda_canonical, lambda_default, sample_in_region, DomainScaler,
    RegionCodec, RegionSpec, SearchDistribution,
};
use crate::rng::RunRng;
use crate::space::{Dataset, MixedPoint, MixedSpace, VarValue};
use crate::surrogate::{fit, FitOptions, KernelSpec, OneHotLayout};
use crate::trace::{RegionSummary, RunTrace, TraceRecord};
use embedding::{build_embedding, EmbeddingState};
use nalgebra::DVector;
use std::collections::HashSet;
use std::time::Instant;
use trust_region::{TrustRegionMode, TrustRegionState};

/// Standard-deviation floor on combinatorial dimensions of the search
/// distribution, in normalized coordinates.
const SIGMA_FLOOR: f64 = 0.1;
/// GP fits use at most this many most recent observations.
const TRAIN_CAP: usize = 500;
/// Acquisition local-search budget per proposal.
const LOCAL_SEARCH_BUDGET: usize = 100;
const INTERLEAVE_ROUNDS: usize = 2;

/// Run one seeded optimization and return its trace.
pub fn run(benchmark: &Benchmark, config: &RunConfig, seed: u64) -> Result<RunTrace> {
    config.validate()?;
    let space = &benchmark.space;
    if space.combinatorial_dims() == 0 {
        return Err(Error::invalid(
            "drivers require at least one combinatorial variable",
        ));
    }
    match config.driver {
        DriverKind::HespBo | DriverKind::HespCasmo | DriverKind::HespBounce => {
            run_meta(benchmark, config, seed)
        }
        DriverKind::Bo | DriverKind::Casmo | DriverKind::Bounce => {
            run_plain(benchmark, config, seed)
        }
    }
}

struct Settings {
    budget: usize,
    n0: usize,
    lambda: usize,
    pool: usize,
    alpha: f64,
    arms: usize,
    eta: f64,
    target_m: f64,
    stop_at: Option<f64>,
    d_a_init: usize,
    tr_lx: f64,
    tr_lh: usize,
}

impl Settings {
    fn resolve(config: &RunConfig, space: &MixedSpace) -> Settings {
        let d = space.dim();
        let d_h = space.combinatorial_dims();
        let lambda = config.overrides.lambda.unwrap_or_else(|| {
            if config.overrides.lambda_canonical {
                lambda_canonical(d)
            } else {
                lambda_default(d)
            }
        });
        let pool = config
            .overrides
            .pool_size
            .unwrap_or_else(|| (100 * d).min(5000))
            .max(4 * lambda);
        let iterations = if config.budget > config.n0 {
            ((config.budget - config.n0) / lambda).max(1)
        } else {
            1
        };
        let eta = config
            .overrides
            .eta
            .unwrap_or_else(|| exp3_eta(config.overrides.encoders, iterations));
        let d_a_init = config.overrides.d_a_init.unwrap_or(if space.is_mixed() {
            4
        } else {
            2
        });
        let tr_lh = config
            .overrides
            .tr_init_lh
            .unwrap_or_else(|| d_h.div_ceil(5).max(2));
        Settings {
            budget: config.budget,
            n0: config.n0,
            lambda,
            pool,
            alpha: config.overrides.alpha,
            arms: config.overrides.encoders,
            eta,
            target_m: config.overrides.target_m,
            stop_at: config.overrides.stop_at,
            d_a_init,
            tr_lx: config.overrides.tr_init_lx,
            tr_lh,
        }
    }
}

fn arm_kind(arm: usize) -> EncoderKind {
    if arm == 0 {
        EncoderKind::Ordinal
    } else {
        EncoderKind::Target
    }
}

fn make_encoder(
    kind: EncoderKind,
    space: &MixedSpace,
    dataset: &Dataset,
    target_m: f64,
) -> Result<(Encoder, DomainScaler)> {
    let encoder = match kind {
        EncoderKind::Ordinal => fit_ordinal(space)?,
        EncoderKind::Target => fit_target(space, dataset, target_m)?,
    };
    let scaler = DomainScaler::new(space, &encoder)?;
    Ok((encoder, scaler))
}

/// Normalized unit-cube coordinates of a point: continuous values scaled by
/// their bounds, categories on the even grid k / (c - 1).
fn unit_coords(space: &MixedSpace, p: &MixedPoint) -> Vec<f64> {
    space
        .variables()
        .iter()
        .zip(&p.values)
        .map(|(var, value)| match (value, var.bounds(), var.cardinality()) {
            (VarValue::Continuous(x), Some((lo, hi)), _) => (x - lo) / (hi - lo),
            (VarValue::Category(k), _, Some(c)) => *k as f64 / (c - 1) as f64,
            _ => unreachable!("value kind matches variable kind"),
        })
        .collect()
}

/// Hashable identity of a point, used to deduplicate proposals.
fn point_key(p: &MixedPoint) -> Vec<u64> {
    p.values
        .iter()
        .map(|v| match v {
            VarValue::Category(k) => *k as u64,
            VarValue::Continuous(x) => x.to_bits(),
        })
        .collect()
}

/// Thompson-sampling batch selection with redraw-on-collision against
/// `existing` point keys. Returns indices into the pool.
fn ts_select_batch(
    sampler: &PosteriorSampler,
    decoded: &[MixedPoint],
    count: usize,
    existing: &mut HashSet<Vec<u64>>,
    rng: &mut RunRng,
) -> Vec<usize> {
    let mut picks = Vec::with_capacity(count);
    for _ in 0..count.min(decoded.len()) {
        let mut chosen: Option<usize> = None;
        for redraw in 0..5 {
            let sample = sampler.draw(rng);
            let mut order: Vec<usize> = (0..sample.len()).collect();
            order.sort_by(|&a, &b| sample[a].total_cmp(&sample[b]));
            if !existing.contains(&point_key(&decoded[order[0]])) {
                chosen = Some(order[0]);
                break;
            }
            if redraw == 4 {
                // Walk this draw for the first novel candidate; fall back to
                // the sampled argmin when the pool is exhausted.
                chosen = Some(
                    order
                        .iter()
                        .copied()
                        .find(|&i| !existing.contains(&point_key(&decoded[i])))
                        .unwrap_or(order[0]),
                );
            }
        }
        let idx = chosen.expect("selection loop always chooses");
        existing.insert(point_key(&decoded[idx]));
        picks.push(idx);
    }
    picks
}

fn fit_options(warm: &Option<(KernelSpec, f64)>) -> FitOptions {
    FitOptions {
        restarts: 4,
        max_steps: 48,
        learning_rate: 0.08,
        warm_start: warm.clone(),
        prior_weight: 1.0,
    }
}

/// Most recent `TRAIN_CAP` observations as (featurized inputs, values).
fn training_window<F>(dataset: &Dataset, featurize: F) -> (Vec<DVector<f64>>, Vec<f64>)
where
    F: Fn(&MixedPoint) -> DVector<f64>,
{
    let start = dataset.len().saturating_sub(TRAIN_CAP);
    let feats = dataset.points[start..].iter().map(featurize).collect();
    let values = dataset.values[start..].to_vec();
    (feats, values)
}

// ---------------------------------------------------------------------------
// Meta-algorithm drivers
// ---------------------------------------------------------------------------

/// Per-era data the embedding strategy tracks: every evaluated point's
/// pre-image in the current target space.
struct BounceEra {
    v_points: Vec<DVector<f64>>,
    values: Vec<f64>,
    pending: Vec<DVector<f64>>,
    evals_since_increase: usize,
    /// Novel (non-duplicate) picks in the last proposal batch; zero signals
    /// an exhausted subspace.
    last_batch_novel: usize,
    /// Evaluations per growth stage: half the budget split over the
    /// doublings planned when the era began.
    stage_length: usize,
}

enum Strategy {
    Bo,
    Casmo {
        tr: TrustRegionState,
    },
    Bounce {
        tr: TrustRegionState,
        emb: EmbeddingState,
        era: BounceEra,
    },
}

impl Strategy {
    fn info(&self) -> (f64, Option<usize>, Option<usize>) {
        match self {
            Strategy::Bo => (1.0, None, None),
            Strategy::Casmo { tr } => (tr.l_x, Some(tr.l_h), None),
            Strategy::Bounce { tr, emb, .. } => (tr.l_x, Some(tr.l_h), Some(emb.d_a())),
        }
    }
}

struct MetaState<'a> {
    benchmark: &'a Benchmark,
    settings: Settings,
    ordinal_encoder: Encoder,
    ordinal_scaler: DomainScaler,
    dataset: Dataset,
    best: f64,
    evals: usize,
    warm: Option<(KernelSpec, f64)>,
}

fn run_meta(benchmark: &Benchmark, config: &RunConfig, seed: u64) -> Result<RunTrace> {
    let space = &benchmark.space;
    let settings = Settings::resolve(config, space);
    let comb_dims = space.combinatorial_indices();
    let t_max = if settings.budget > settings.n0 {
        (settings.budget - settings.n0) / settings.lambda
    } else {
        0
    };

    let mut rng = RunRng::seed_from_u64(seed);
    let mut trace = RunTrace::new(config.clone(), seed);
    let ordinal_encoder = fit_ordinal(space)?;
    let ordinal_scaler = DomainScaler::new(space, &ordinal_encoder)?;
    let mut state = MetaState {
        benchmark,
        settings,
        ordinal_encoder,
        ordinal_scaler,
        dataset: Dataset::new(),
        best: f64::INFINITY,
        evals: 0,
    warm: None,
    };
    let mut exp3 = Exp3State::new(state.settings.arms, state.settings.eta, state.settings.lambda)?;
    let mut t = 0usize;

    'outer: while t <= t_max && state.evals < state.settings.budget {
        // Fresh encoder weights and a uniformly sampled initial encoder.
        let arm = exp3.reset(&mut rng);
        let mut strategy = init_strategy(config.driver, space, &state.settings, &mut rng)?;

        // Fresh initial design.
        let n_init = state.settings.n0.min(state.settings.budget - state.evals);
        let init_points = initial_points(&mut strategy, space, n_init, &mut rng);
        let era_start = state.dataset.len();
        for p in init_points {
            observe(&mut state, &mut strategy, &mut trace, p, t, None, None)?;
        }
        if state.evals >= state.settings.budget || stop_hit(&state) {
            break 'outer;
        }

        let mut kind = arm_kind(arm);
        let (mut encoder, mut scaler) =
            make_encoder(kind, space, &state.dataset, state.settings.target_m)?;
        // Region initialized from this restart's encoded initial block.
        let init_encoded: Vec<(Vec<f64>, f64)> = (era_start..state.dataset.len())
            .map(|i| {
                Ok((
                    scaler.encode_unit(&encoder, &state.dataset.points[i])?,
                    state.dataset.values[i],
                ))
            })
            .collect::<Result<_>>()?;
        let mut dist = SearchDistribution::init_from_data(
            &init_encoded,
            0.0,
            1.0,
            state.settings.lambda,
            &comb_dims,
            SIGMA_FLOOR,
        )?;
        let mut era_history: Vec<f64> = Vec::new();

        loop {
            if t > t_max || state.evals >= state.settings.budget || stop_hit(&state) {
                break 'outer;
            }
            let started = Instant::now();
            let count = state
                .settings
                .lambda
                .min(state.settings.budget - state.evals);
            let proposals = propose(
                &mut strategy,
                &mut state,
                &encoder,
                &scaler,
                &dist,
                count,
                &mut rng,
            )?;
            let summary = region_summary(&strategy, space, &dist, &encoder, &scaler)?;
            let before_best = state.best;
            let mut batch_values = Vec::with_capacity(proposals.len());
            let mut batch_encoded = Vec::with_capacity(proposals.len());
            for p in proposals {
                batch_encoded.push(scaler.encode_unit(&encoder, &p)?);
                let y = observe(
                    &mut state,
                    &mut strategy,
                    &mut trace,
                    p,
                    t,
                    Some(kind),
                    Some(summary.clone()),
                )?;
                batch_values.push(y);
            }
            t += 1;
            if batch_values.len() >= 2 {
                let batch: Vec<(DVector<f64>, f64)> = batch_encoded
                    .into_iter()
                    .zip(batch_values.iter().copied())
                    .map(|(v, y)| (DVector::from_vec(v), y))
                    .collect();
                dist.cma_update(&batch)?;
            }
            let improved = state.best < before_best;
            after_batch(
                &mut strategy,
                space,
                &state.settings,
                batch_values.len(),
                improved,
                &mut rng,
            );
            // Next encoder via the bandit, retrained on the full dataset.
            let next = exp3.update(&batch_values, &state.dataset.values, &mut rng)?;
            let next_kind = arm_kind(next);
            let rebuilt = make_encoder(next_kind, space, &state.dataset, state.settings.target_m)?;
            // The numeric mean only keeps its meaning while the encoding map
            // is unchanged; when it changes (encoder switch, or a target
            // refit moving its tables), re-express the mean so it stays on
            // the same decoded cells, carrying the sub-cell offset when that
            // does not change the decoded cell.
            if kind != next_kind || next_kind == EncoderKind::Target {
                let mean: Vec<f64> = dist.mean().iter().copied().collect();
                let decoded = scaler.decode_unit(&encoder, space, &mean)?;
                let cell_old = scaler.encode_unit(&encoder, &decoded)?;
                let cell_new = rebuilt.1.encode_unit(&rebuilt.0, &decoded)?;
                let mut new_mean = Vec::with_capacity(mean.len());
                for i in 0..mean.len() {
                    new_mean.push(cell_new[i] + (mean[i] - cell_old[i]));
                }
                let check = rebuilt.1.decode_unit(&rebuilt.0, space, &new_mean)?;
                if check != decoded {
                    new_mean = cell_new;
                }
                dist.set_mean(DVector::from_vec(new_mean));
            }
            kind = next_kind;
            encoder = rebuilt.0;
            scaler = rebuilt.1;
            era_history.push(state.best);
            trace
                .iteration_seconds
                .push(started.elapsed().as_secs_f64());
            if check_restart(&dist, &era_history) {
                break;
            }
        }
    }
    Ok(trace)
}

fn stop_hit(state: &MetaState<'_>) -> bool {
    state
        .settings
        .stop_at
        .map_or(false, |threshold| state.best <= threshold)
}

fn init_strategy(
    driver: DriverKind,
    space: &MixedSpace,
    settings: &Settings,
    rng: &mut RunRng,
) -> Result<Strategy> {
    Ok(match driver {
        DriverKind::HespBo | DriverKind::Bo => Strategy::Bo,
        DriverKind::HespCasmo | DriverKind::Casmo => Strategy::Casmo {
            tr: TrustRegionState::new(
                settings.tr_lx,
                settings.tr_lh,
                space.combinatorial_dims().max(1),
                TrustRegionMode::Counted,
            ),
        },
        DriverKind::HespBounce | DriverKind::Bounce => {
            let d_a_init = settings.d_a_init.min(space.dim());
            let emb = build_embedding(space, d_a_init, rng)?;
            let l_h_max = emb.bin_space().combinatorial_dims().max(1);
            let total_doublings = (space.dim() as f64 / emb.d_a() as f64).log2().ceil().max(1.0);
            let stage_length =
                ((settings.budget as f64 / 2.0) / total_doublings).ceil().max(1.0) as usize;
            Strategy::Bounce {
                tr: TrustRegionState::new(
                    settings.tr_lx,
                    settings.tr_lh.min(l_h_max),
                    l_h_max,
                    TrustRegionMode::Instant,
                ),
                emb,
                era: BounceEra {
                    v_points: Vec::new(),
                    values: Vec::new(),
                    pending: Vec::new(),
                    evals_since_increase: 0,
                    last_batch_novel: 0,
                    stage_length,
                },
            }
        }
    })
}

/// Initial design: uniform over the space, except the embedding strategy
/// draws in the target space so every point has a pre-image.
fn initial_points(
    strategy: &mut Strategy,
    space: &MixedSpace,
    n: usize,
    rng: &mut RunRng,
) -> Vec<MixedPoint> {
    match strategy {
        Strategy::Bounce { emb, era, .. } => (0..n)
            .map(|_| {
                // Uniform over the full space; the pre-image is the
                // least-squares projection into the current target space.
                let z = space.sample_uniform(rng);
                era.pending.push(emb.project_down(&unit_coords(space, &z)));
                z
            })
            .collect(),
        _ => (0..n).map(|_| space.sample_uniform(rng)).collect(),
    }
}

/// Evaluate, record, and feed strategy bookkeeping. Returns the value.
fn observe(
    state: &mut MetaState<'_>,
    strategy: &mut Strategy,
    trace: &mut RunTrace,
    point: MixedPoint,
    iteration: usize,
    encoder: Option<EncoderKind>,
    region: Option<RegionSummary>,
) -> Result<f64> {
    let value = state.benchmark.objective.eval(&point);
    if !value.is_finite() {
        return Err(Error::numerical(format!(
            "objective returned non-finite value {value}"
        )));
    }
    state.evals += 1;
    state.best = state.best.min(value);
    if let Strategy::Bounce { era, .. } = strategy {
        // Pre-images were queued in proposal order.
        let v = era
            .pending
            .drain(..1)
            .next()
            .expect("every evaluated point has a queued pre-image");
        era.v_points.push(v);
        era.values.push(value);
    }
    state.dataset.push(point.clone(), value)?;
    trace.records.push(TraceRecord {
        index: state.evals - 1,
        iteration,
        point,
        value,
        best_so_far: state.best,
        encoder: encoder.map(|k| k.name().to_string()),
        region,
    });
    Ok(value)
}

fn region_summary(
    strategy: &Strategy,
    space: &MixedSpace,
    dist: &SearchDistribution,
    encoder: &Encoder,
    scaler: &DomainScaler,
) -> Result<RegionSummary> {
    let (l_x, l_h, d_a) = strategy.info();
    let mean: Vec<f64> = dist.mean().iter().copied().collect();
    let mean_decoded = scaler.decode_unit(encoder, space, &mean)?;
    Ok(RegionSummary {
        cov_diag: (0..dist.dim()).map(|i| dist.covariance()[(i, i)]).collect(),
        mean,
        sigma: dist.sigma(),
        mean_decoded,
        l_x,
        l_h,
        d_a,
        repairs: dist.repairs(),
    })
}

fn propose(
    strategy: &mut Strategy,
    state: &mut MetaState<'_>,
    encoder: &Encoder,
    scaler: &DomainScaler,
    dist: &SearchDistribution,
    count: usize,
    rng: &mut RunRng,
) -> Result<Vec<MixedPoint>> {
    match strategy {
        Strategy::Bo => propose_bo(state, encoder, scaler, dist, count, rng),
        Strategy::Casmo { tr } => propose_casmo(state, encoder, scaler, dist, tr, count, rng),
        Strategy::Bounce { tr, emb, era } => {
            propose_bounce(state, dist, tr, emb, era, count, rng)
        }
    }
}

fn after_batch(
    strategy: &mut Strategy,
    space: &MixedSpace,
    settings: &Settings,
    batch_len: usize,
    improved: bool,
    rng: &mut RunRng,
) {
    match strategy {
        Strategy::Bo => {}
        Strategy::Casmo { tr } => tr.update(improved),
        Strategy::Bounce { tr, emb, era } => {
            tr.update(improved);
            era.evals_since_increase += batch_len;
            let d = space.dim();
            let _ = settings;
            if emb.d_a() < d {
                // Grow early when the batch found nothing new to evaluate.
                let exhausted = era.last_batch_novel == 0;
                if exhausted || era.evals_since_increase >= era.stage_length {
                    let parents = emb.increase(rng);
                    for v in era.v_points.iter_mut() {
                        *v = DVector::from_fn(parents.len(), |b, _| v[parents[b]]);
                    }
                    era.evals_since_increase = 0;
                    // Trust-region Hamming cap follows the grown bin space.
                    tr.l_h_max = emb.bin_space().combinatorial_dims().max(1);
                }
            }
        }
    }
}

fn ordinal_featurize(state: &MetaState<'_>, p: &MixedPoint) -> DVector<f64> {
    DVector::from_vec(
        state
            .ordinal_scaler
            .encode_unit(&state.ordinal_encoder, p)
            .expect("dataset points encode"),
    )
}

/// Category indices as-is, continuous coordinates normalized to [0,1].
fn casmo_featurize(space: &MixedSpace, p: &MixedPoint) -> DVector<f64> {
    DVector::from_fn(space.dim(), |i, _| match (&p.values[i], &space.variables()[i]) {
        (VarValue::Category(k), _) => *k as f64,
        (VarValue::Continuous(x), var) => {
            let (lo, hi) = var.bounds().unwrap();
            (x - lo) / (hi - lo)
        }
    })
}

fn propose_bo(
    state: &mut MetaState<'_>,
    encoder: &Encoder,
    scaler: &DomainScaler,
    dist: &SearchDistribution,
    count: usize,
    rng: &mut RunRng,
) -> Result<Vec<MixedPoint>> {
    let space = &state.benchmark.space;
    let region = RegionSpec::ellipsoid(state.settings.alpha, space.dim())?;
    let encoded = sample_in_region(dist, &region, state.settings.pool, rng, None)?;
    let decoded: Vec<MixedPoint> = encoded
        .iter()
        .map(|v| scaler.decode_unit(encoder, space, v.as_slice()))
        .collect::<Result<_>>()?;
    let pool = CandidatePool { encoded, decoded };

    let (feats, values) = training_window(&state.dataset, |p| ordinal_featurize(state, p));
    let template = KernelSpec::Matern52Ard {
        lengthscales: vec![0.5; space.dim()],
        signal_variance: 1.0,
    };
    let t_fit = Instant::now();
    let model = fit(&feats, &values, &template, rng, &fit_options(&state.warm))?;
    let fit_secs = t_fit.elapsed().as_secs_f64();
    state.warm = Some((model.kernel().clone(), model.noise_variance()));
    let pool_feats: Vec<DVector<f64>> = pool
        .decoded
        .iter()
        .map(|p| ordinal_featurize(state, p))
        .collect();
    let t_ts = Instant::now();
    let sampler = PosteriorSampler::new(&model, &pool_feats)?;
    let mut existing: HashSet<Vec<u64>> = state.dataset.points.iter().map(point_key).collect();
    let picks = ts_select_batch(&sampler, &pool.decoded, count, &mut existing, rng);
    if std::env::var_os("HESP_DEBUG").is_some() {
        let true_vals: Vec<f64> = picks.iter().map(|&i| state.benchmark.objective.eval(&pool.decoded[i])).collect();
        let pool_sample_vals: Vec<f64> = (0..50).map(|i| state.benchmark.objective.eval(&pool.decoded[i * pool.decoded.len() / 50])).collect();
        let mean_pool = pool_sample_vals.iter().sum::<f64>() / 50.0;
        let min_pick = true_vals.iter().cloned().fold(f64::INFINITY, f64::min);
        if let KernelSpec::Matern52Ard { lengthscales, signal_variance } = model.kernel() {
            let lmin = lengthscales.iter().cloned().fold(f64::INFINITY, f64::min);
            let lmax = lengthscales.iter().cloned().fold(0.0_f64, f64::max);
            eprintln!(
                "n={} fit {:.2}s ts {:.2}s | ls [{:.3},{:.3}] sv {:.3} noise {:.2e} lml {:.1} | pick_min {:.3} pool_mean {:.3} best {:.3}",
                feats.len(), fit_secs, t_ts.elapsed().as_secs_f64(), lmin, lmax, signal_variance,
                model.noise_variance(), model.log_marginal(), min_pick, mean_pool, state.best
            );
        }
    }
    Ok(picks.into_iter().map(|i| pool.decoded[i].clone()).collect())
}

fn casmo_scale(space: &MixedSpace, l_x: f64) -> Vec<f64> {
    space
        .variables()
        .iter()
        .map(|v| if v.is_continuous() { l_x * l_x } else { 1.0 })
        .collect()
}

fn propose_casmo(
    state: &mut MetaState<'_>,
    encoder: &Encoder,
    scaler: &DomainScaler,
    dist: &SearchDistribution,
    tr: &TrustRegionState,
    count: usize,
    rng: &mut RunRng,
) -> Result<Vec<MixedPoint>> {
    let space = &state.benchmark.space;
    let region = RegionSpec::new(
        state.settings.alpha,
        casmo_scale(space, tr.l_x),
        Some(tr.l_h),
    )?;
    let mean: Vec<f64> = dist.mean().iter().copied().collect();
    let center = scaler.decode_unit(encoder, space, &mean)?;
    let codec = RegionCodec {
        space,
        center_decoded: center,
        decode: Box::new(|v| scaler.decode_unit(encoder, space, v)),
        category_coord: Box::new(|var, cat| scaler.category_coord(encoder, var, cat)),
    };
    let encoded = sample_in_region(dist, &region, state.settings.pool, rng, Some(&codec))?;
    let decoded: Vec<MixedPoint> = encoded
        .iter()
        .map(|v| scaler.decode_unit(encoder, space, v.as_slice()))
        .collect::<Result<_>>()?;

    let (feats, values) = training_window(&state.dataset, |p| casmo_featurize(space, p));
    let template = KernelSpec::MixedCocabo {
        comb_dims: space.combinatorial_indices(),
        cont_dims: space.continuous_indices(),
        comb_lengthscales: vec![1.0; space.combinatorial_dims()],
        cont_lengthscales: vec![0.5; space.continuous_dims()],
        signal_variance: 1.0,
        mix_weight: 0.5,
    };
    let model = fit(&feats, &values, &template, rng, &fit_options(&state.warm))?;
    state.warm = Some((model.kernel().clone(), model.noise_variance()));
    let pool_feats: Vec<DVector<f64>> = decoded.iter().map(|p| casmo_featurize(space, p)).collect();
    let sampler = PosteriorSampler::new(&model, &pool_feats)?;
    let mut existing: HashSet<Vec<u64>> = state.dataset.points.iter().map(point_key).collect();
    let picks = ts_select_batch(&sampler, &decoded, count, &mut existing, rng);
    Ok(picks.into_iter().map(|i| decoded[i].clone()).collect())
}

fn bounce_layout(emb: &EmbeddingState) -> OneHotLayout {
    let bin_space = emb.bin_space();
    OneHotLayout {
        cont_count: bin_space.continuous_dims(),
        cardinalities: bin_space
            .variables()
            .iter()
            .filter_map(|v| v.cardinality())
            .collect(),
    }
}

/// Feature vector of a bin point: continuous bins first, one-hot blocks after.
fn bounce_featurize(emb: &EmbeddingState, layout: &OneHotLayout, p: &MixedPoint) -> DVector<f64> {
    let bin_space = emb.bin_space();
    let mut cont = Vec::with_capacity(layout.cont_count);
    let mut cats = Vec::with_capacity(layout.cardinalities.len());
    for (value, var) in p.values.iter().zip(bin_space.variables()) {
        if var.is_continuous() {
            cont.push(value.as_continuous());
        } else {
            cats.push(value.as_category());
        }
    }
    layout.expand(&cont, &cats)
}

#[allow(clippy::too_many_arguments)]
fn propose_bounce(
    state: &MetaState<'_>,
    dist: &SearchDistribution,
    tr: &TrustRegionState,
    emb: &mut EmbeddingState,
    era: &mut BounceEra,
    count: usize,
    rng: &mut RunRng,
) -> Result<Vec<MixedPoint>> {
    let space = &state.benchmark.space;
    let d = space.dim();
    // Project the search distribution into the target space.
    let p_mat = emb.p_matrix(d);
    let mean: Vec<f64> = dist.mean().iter().copied().collect();
    let m_v = emb.project_down(&mean);
    let cov_v = &p_mat * dist.covariance() * p_mat.transpose();
    let dist_v = SearchDistribution::from_moments(m_v.clone(), cov_v, dist.sigma(), dist.lambda())?;

    let bin_space = emb.bin_space().clone();
    let scale: Vec<f64> = bin_space
        .variables()
        .iter()
        .map(|v| if v.is_continuous() { tr.l_x * tr.l_x } else { 1.0 })
        .collect();
    let region = RegionSpec::new(state.settings.alpha, scale, Some(tr.l_h))?;
    let emb_ref = &*emb;
    let codec = RegionCodec {
        space: &bin_space,
        center_decoded: emb_ref.decode_bin_point(m_v.as_slice())?,
        decode: Box::new(move |v| emb_ref.decode_bin_point(v)),
        category_coord: Box::new(move |bin, cat| emb_ref.bin_category_coord(bin, cat)),
    };
    let encoded = sample_in_region(&dist_v, &region, state.settings.pool, rng, Some(&codec))?;
    let bin_points: Vec<MixedPoint> = encoded
        .iter()
        .map(|v| emb_ref.decode_bin_point(v.as_slice()))
        .collect::<Result<_>>()?;

    // GP over one-hot features of the current era's observations.
    let layout = bounce_layout(emb_ref);
    let start = era.v_points.len().saturating_sub(TRAIN_CAP);
    let feats: Vec<DVector<f64>> = era.v_points[start..]
        .iter()
        .map(|v| {
            let bp = emb_ref.decode_bin_point(v.as_slice())?;
            Ok(bounce_featurize(emb_ref, &layout, &bp))
        })
        .collect::<Result<_>>()?;
    let values = era.values[start..].to_vec();
    if feats.len() < 2 {
        return Err(Error::invalid("embedding era has too little data to fit"));
    }
    let onehot_dims = layout.onehot_dims();
    let template = KernelSpec::BounceMixed {
        onehot_lengthscales: vec![0.7; onehot_dims.len()],
        cont_lengthscales: vec![0.5; layout.cont_count],
        onehot_dims,
        cont_dims: layout.cont_dims(),
        signal_variance: 1.0,
        mix_weight: 0.5,
    };
    let model = fit(&feats, &values, &template, rng, &fit_options(&None))?;
    let incumbent = values.iter().cloned().fold(f64::INFINITY, f64::min);

    // Score the pool by expected improvement, then refine the best starts.
    let mut scored: Vec<(usize, f64)> = bin_points
        .iter()
        .enumerate()
        .map(|(i, bp)| {
            let ei = expected_improvement(&model, &bounce_featurize(emb_ref, &layout, bp), incumbent);
            (i, ei)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));

    let membership = |p: &MixedPoint| {
        let v = emb_ref.encode_bin_point(p);
        in_region(&v, &dist_v, &region, Some(&codec)).unwrap_or(false)
    };
    let mut ei_score = |p: &MixedPoint| {
        expected_improvement(&model, &bounce_featurize(emb_ref, &layout, p), incumbent)
    };

    let mut existing: HashSet<Vec<u64>> = state.dataset.points.iter().map(point_key).collect();
    let mut picks: Vec<MixedPoint> = Vec::with_capacity(count);
    let mut new_pre_images: Vec<DVector<f64>> = Vec::new();
    let mut start_cursor = 0usize;
    while picks.len() < count && start_cursor < scored.len() {
        let start_bp = &bin_points[scored[start_cursor].0];
        let optimized = if picks.is_empty() && bin_space.is_mixed() {
            interleaved_search(
                &bin_space,
                &bin_points,
                &mut ei_score,
                &membership,
                INTERLEAVE_ROUNDS,
                LOCAL_SEARCH_BUDGET,
            )?
        } else {
            local_search(
                &bin_space,
                start_bp,
                &mut ei_score,
                &membership,
                LOCAL_SEARCH_BUDGET,
            )
        };
        let z = emb_ref.bin_point_to_mixed(&optimized, space);
        let key = point_key(&z);
        start_cursor += 1;
        if existing.contains(&key) {
            // Fall back to the unrefined pool candidate.
            let z_raw = emb_ref.bin_point_to_mixed(start_bp, space);
            let raw_key = point_key(&z_raw);
            if existing.contains(&raw_key) {
                continue;
            }
            existing.insert(raw_key);
            new_pre_images.push(emb_ref.encode_bin_point(start_bp));
            picks.push(z_raw);
            continue;
        }
        existing.insert(key);
        new_pre_images.push(emb_ref.encode_bin_point(&optimized));
        picks.push(z);
    }
    era.last_batch_novel = picks.len();
    // Pool exhausted by duplicates: pad with raw candidates.
    let mut pad = 0usize;
    while picks.len() < count && pad < bin_points.len() {
        let z = emb_ref.bin_point_to_mixed(&bin_points[pad], space);
        new_pre_images.push(emb_ref.encode_bin_point(&bin_points[pad]));
        picks.push(z);
        pad += 1;
    }
    era.pending.extend(new_pre_images);
    Ok(picks)
}

// ---------------------------------------------------------------------------
// Plain baselines
// ---------------------------------------------------------------------------

fn run_plain(benchmark: &Benchmark, config: &RunConfig, seed: u64) -> Result<RunTrace> {
    let space = &benchmark.space;
    let settings = Settings::resolve(config, space);
    let mut rng = RunRng::seed_from_u64(seed);
    let mut trace = RunTrace::new(config.clone(), seed);
    let ordinal_encoder = fit_ordinal(space)?;
    let ordinal_scaler = DomainScaler::new(space, &ordinal_encoder)?;
    let mut state = MetaState {
        benchmark,
        settings,
        ordinal_encoder,
        ordinal_scaler,
        dataset: Dataset::new(),
        best: f64::INFINITY,
        evals: 0,
        warm: None,
    };
    let mut strategy = init_strategy(config.driver, space, &state.settings, &mut rng)?;

    let n_init = state.settings.n0.min(state.settings.budget);
    for p in initial_points(&mut strategy, space, n_init, &mut rng) {
        observe(&mut state, &mut strategy, &mut trace, p, 0, None, None)?;
    }
    let mut t = 0usize;
    while state.evals < state.settings.budget && !stop_hit(&state) {
        let started = Instant::now();
        let count = state
            .settings
            .lambda
            .min(state.settings.budget - state.evals);
        let before_best = state.best;
        let proposals = match &mut strategy {
            Strategy::Bo => plain_bo_propose(&mut state, count, &mut rng)?,
            Strategy::Casmo { tr } => plain_casmo_propose(&mut state, tr, count, &mut rng)?,
            Strategy::Bounce { tr, emb, era } => {
                plain_bounce_propose(&state, tr, emb, era, count, &mut rng)?
            }
        };
        let mut batch = Vec::new();
        for p in proposals {
            batch.push(observe(&mut state, &mut strategy, &mut trace, p, t, None, None)?);
        }
        t += 1;
        let improved = state.best < before_best;
        after_batch(
            &mut strategy,
            space,
            &state.settings,
            batch.len(),
            improved,
            &mut rng,
        );
        trace
            .iteration_seconds
            .push(started.elapsed().as_secs_f64());
    }
    Ok(trace)
}

fn plain_bo_propose(
    state: &mut MetaState<'_>,
    count: usize,
    rng: &mut RunRng,
) -> Result<Vec<MixedPoint>> {
    let space = &state.benchmark.space;
    let decoded: Vec<MixedPoint> = (0..state.settings.pool)
        .map(|_| space.sample_uniform(rng))
        .collect();
    let (feats, values) = training_window(&state.dataset, |p| ordinal_featurize(state, p));
    let template = KernelSpec::Matern52Ard {
        lengthscales: vec![0.5; space.dim()],
        signal_variance: 1.0,
    };
    let model = fit(&feats, &values, &template, rng, &fit_options(&state.warm))?;
    state.warm = Some((model.kernel().clone(), model.noise_variance()));
    let pool_feats: Vec<DVector<f64>> = decoded.iter().map(|p| ordinal_featurize(state, p)).collect();
    let sampler = PosteriorSampler::new(&model, &pool_feats)?;
    let mut existing: HashSet<Vec<u64>> = state.dataset.points.iter().map(point_key).collect();
    let picks = ts_select_batch(&sampler, &decoded, count, &mut existing, rng);
    Ok(picks.into_iter().map(|i| decoded[i].clone()).collect())
}

/// Uniform candidate within the trust region around the incumbent: at most
/// `l_h` flipped combinatorial coordinates, continuous coordinates inside the
/// centred box of side `l_x * range`.
fn tr_candidate(
    space: &MixedSpace,
    incumbent: &MixedPoint,
    tr: &TrustRegionState,
    rng: &mut RunRng,
) -> MixedPoint {
    let mut p = incumbent.clone();
    let comb = space.combinatorial_indices();
    if !comb.is_empty() {
        let flips = 1 + rng.below(tr.l_h.max(1));
        for _ in 0..flips {
            let i = comb[rng.below(comb.len())];
            let c = space.variables()[i].cardinality().unwrap();
            p.values[i] = VarValue::Category(rng.below(c));
        }
    }
    for i in space.continuous_indices() {
        let (lo, hi) = space.variables()[i].bounds().unwrap();
        let half = 0.5 * tr.l_x * (hi - lo);
        let x = incumbent.values[i].as_continuous();
        p.values[i] = VarValue::Continuous(rng.uniform_in(x - half, x + half).clamp(lo, hi));
    }
    p
}

fn plain_casmo_propose(
    state: &mut MetaState<'_>,
    tr: &TrustRegionState,
    count: usize,
    rng: &mut RunRng,
) -> Result<Vec<MixedPoint>> {
    let space = &state.benchmark.space;
    let (best_idx, _) = state.dataset.argmin().expect("initialized dataset");
    let incumbent = state.dataset.points[best_idx].clone();
    let decoded: Vec<MixedPoint> = (0..state.settings.pool)
        .map(|_| tr_candidate(space, &incumbent, tr, rng))
        .collect();
    let (feats, values) = training_window(&state.dataset, |p| casmo_featurize(space, p));
    let template = KernelSpec::MixedCocabo {
        comb_dims: space.combinatorial_indices(),
        cont_dims: space.continuous_indices(),
        comb_lengthscales: vec![1.0; space.combinatorial_dims()],
        cont_lengthscales: vec![0.5; space.continuous_dims()],
        signal_variance: 1.0,
        mix_weight: 0.5,
    };
    let model = fit(&feats, &values, &template, rng, &fit_options(&state.warm))?;
    state.warm = Some((model.kernel().clone(), model.noise_variance()));
    let pool_feats: Vec<DVector<f64>> = decoded.iter().map(|p| casmo_featurize(space, p)).collect();
    let sampler = PosteriorSampler::new(&model, &pool_feats)?;
    let mut existing: HashSet<Vec<u64>> = state.dataset.points.iter().map(point_key).collect();
    let picks = ts_select_batch(&sampler, &decoded, count, &mut existing, rng);
    Ok(picks.into_iter().map(|i| decoded[i].clone()).collect())
}

fn plain_bounce_propose(
    state: &MetaState<'_>,
    tr: &TrustRegionState,
    emb: &mut EmbeddingState,
    era: &mut BounceEra,
    count: usize,
    rng: &mut RunRng,
) -> Result<Vec<MixedPoint>> {
    let space = &state.benchmark.space;
    // Incumbent pre-image within the era.
    let (best_idx, _) = era
        .values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::invalid("embedding era has no data"))?;
    let emb_ref = &*emb;
    let incumbent_bin = emb_ref.decode_bin_point(era.v_points[best_idx].as_slice())?;
    let bin_space = emb_ref.bin_space().clone();
    let bin_points: Vec<MixedPoint> = (0..state.settings.pool)
        .map(|_| tr_candidate(&bin_space, &incumbent_bin, tr, rng))
        .collect();

    let layout = bounce_layout(emb_ref);
    let start = era.v_points.len().saturating_sub(TRAIN_CAP);
    let feats: Vec<DVector<f64>> = era.v_points[start..]
        .iter()
        .map(|v| {
            let bp = emb_ref.decode_bin_point(v.as_slice())?;
            Ok(bounce_featurize(emb_ref, &layout, &bp))
        })
        .collect::<Result<_>>()?;
    let values = era.values[start..].to_vec();
    let onehot_dims = layout.onehot_dims();
    let template = KernelSpec::BounceMixed {
        onehot_lengthscales: vec![0.7; onehot_dims.len()],
        cont_lengthscales: vec![0.5; layout.cont_count],
        onehot_dims,
        cont_dims: layout.cont_dims(),
        signal_variance: 1.0,
        mix_weight: 0.5,
    };
    let model = fit(&feats, &values, &template, rng, &fit_options(&None))?;
    let incumbent_value = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut ei_score = |p: &MixedPoint| {
        expected_improvement(&model, &bounce_featurize(emb_ref, &layout, p), incumbent_value)
    };
    // Trust-region membership for refinement moves.
    let membership = |p: &MixedPoint| {
        crate::space::hamming_distance(p, &incumbent_bin, &bin_space)
            .map(|h| h <= tr.l_h)
            .unwrap_or(false)
    };

    let mut scored: Vec<(usize, f64)> = bin_points
        .iter()
        .enumerate()
        .map(|(i, bp)| (i, ei_score(bp)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut existing: HashSet<Vec<u64>> = state.dataset.points.iter().map(point_key).collect();
    let mut picks = Vec::with_capacity(count);
    let mut cursor = 0usize;
    while picks.len() < count && cursor < scored.len() {
        let start_bp = &bin_points[scored[cursor].0];
        cursor += 1;
        let optimized = if picks.is_empty() && bin_space.is_mixed() {
            interleaved_search(
                &bin_space,
                &bin_points,
                &mut ei_score,
                &membership,
                INTERLEAVE_ROUNDS,
                LOCAL_SEARCH_BUDGET,
            )?
        } else {
            local_search(&bin_space, start_bp, &mut ei_score, &membership, LOCAL_SEARCH_BUDGET)
        };
        for candidate in [optimized, start_bp.clone()] {
            let z = emb_ref.bin_point_to_mixed(&candidate, space);
            let key = point_key(&z);
            if !existing.contains(&key) {
                existing.insert(key);
                era.pending.push(emb_ref.encode_bin_point(&candidate));
                picks.push(z);
                break;
            }
        }
    }
    era.last_batch_novel = picks.len();
    let mut pad = 0usize;
    while picks.len() < count && pad < bin_points.len() {
        era.pending.push(emb_ref.encode_bin_point(&bin_points[pad]));
        picks.push(emb_ref.bin_point_to_mixed(&bin_points[pad], space));
        pad += 1;
    }
    Ok(picks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::benchmark;

    fn quick_config(driver: DriverKind, bench: &str, budget: usize) -> RunConfig {
        let mut c = RunConfig::new(bench, driver, budget);
        c.n0 = 8;
        c.repeats = 1;
        c
    }

    #[test]
    fn budget_is_exact_for_every_driver() {
        let bench = benchmark("maxsat10").unwrap();
        for driver in DriverKind::all() {
            let config = quick_config(driver, "maxsat10", 31);
            let trace = run(&bench, &config, 3).unwrap();
            assert_eq!(
                trace.evaluations(),
                31,
                "driver {} missed the budget",
                driver.name()
            );
            // Best-so-far is non-increasing.
            let mut prev = f64::INFINITY;
            for r in &trace.records {
                assert!(r.best_so_far <= prev + 1e-15);
                prev = r.best_so_far;
            }
        }
    }

    #[test]
    fn budget_equal_to_n0_yields_initial_design_only() {
        let bench = benchmark("maxsat10").unwrap();
        let mut config = quick_config(DriverKind::HespBo, "maxsat10", 8);
        config.n0 = 8;
        let trace = run(&bench, &config, 1).unwrap();
        assert_eq!(trace.evaluations(), 8);
        assert!(trace.records.iter().all(|r| r.region.is_none()));
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let bench = benchmark("maxsat10").unwrap();
        for driver in [DriverKind::HespBo, DriverKind::HespCasmo, DriverKind::HespBounce] {
            let config = quick_config(driver, "maxsat10", 26);
            let a = run(&bench, &config, 11).unwrap();
            let b = run(&bench, &config, 11).unwrap();
            assert_eq!(a.to_jsonl(), b.to_jsonl(), "driver {}", driver.name());
            let c = run(&bench, &config, 12).unwrap();
            assert_ne!(a.to_jsonl(), c.to_jsonl(), "different seeds should differ");
        }
    }

    #[test]
    fn single_arm_always_selects_ordinal() {
        let bench = benchmark("maxsat10").unwrap();
        let mut config = quick_config(DriverKind::HespBo, "maxsat10", 30);
        config.overrides.encoders = 1;
        let trace = run(&bench, &config, 5).unwrap();
        for r in trace.records.iter().filter(|r| r.encoder.is_some()) {
            assert_eq!(r.encoder.as_deref(), Some("ordinal"));
        }
    }

    #[test]
    fn stop_at_halts_early() {
        let bench = benchmark("maxsat10").unwrap();
        let mut config = quick_config(DriverKind::HespBo, "maxsat10", 60);
        // Stop as soon as anything at all is observed.
        config.overrides.stop_at = Some(f64::INFINITY);
        let trace = run(&bench, &config, 5).unwrap();
        assert!(trace.evaluations() <= config.n0);
    }

    #[test]
    fn hesp_records_region_state() {
        let bench = benchmark("maxsat10").unwrap();
        let config = quick_config(DriverKind::HespCasmo, "maxsat10", 30);
        let trace = run(&bench, &config, 2).unwrap();
        let with_region: Vec<_> = trace
            .records
            .iter()
            .filter(|r| r.region.is_some())
            .collect();
        assert!(!with_region.is_empty());
        for r in with_region {
            let region = r.region.as_ref().unwrap();
            assert_eq!(region.mean.len(), 10);
            assert!(region.sigma > 0.0);
            assert!(region.l_h.is_some());
            // Combinatorial standard-deviation floor.
            for (i, cd) in region.cov_diag.iter().enumerate() {
                let sd = region.sigma * cd.sqrt();
                assert!(sd >= SIGMA_FLOOR - 1e-9, "dim {i} sd {sd}");
            }
        }
    }

    #[test]
    fn bounce_tracks_embedding_dimension() {
        let bench = benchmark("maxsat10").unwrap();
        let mut config = quick_config(DriverKind::HespBounce, "maxsat10", 40);
        config.overrides.d_a_init = Some(2);
        let trace = run(&bench, &config, 4).unwrap();
        let d_as: Vec<usize> = trace
            .records
            .iter()
            .filter_map(|r| r.region.as_ref().and_then(|s| s.d_a))
            .collect();
        assert!(!d_as.is_empty());
        // Monotone growth, capped by the input dimension.
        for w in d_as.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!(*d_as.last().unwrap() <= 10);
    }
}
