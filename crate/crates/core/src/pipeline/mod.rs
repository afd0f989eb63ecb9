//! The experiment grid: per-(subject, ROI) baselines, ensembles, and their
//! evaluation on held-out rows.
//!
//! Everything that is fitted (ridge encoders, lambda searches, PCA
//! reductions, accuracy-derived and learned weights) only ever sees the
//! training rows of the split. Test rows are touched once, by
//! [`Experiment::evaluate`].

use std::path::PathBuf;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{select_rows, Dataset, DatasetManifest, SplitSpec};
use crate::ensemble::{
    average_embeddings, fit_dynamic_weights, inner_split, literal_power_mean,
    literal_weighted_average, power_weights, stack_average, weighted_average, AccuracyMetric,
    DynamicWeightConfig, TaskAccuracyTable, WeightVector,
};
use crate::error::{Error, Result};
use crate::metrics::{pearson_metric, pearson_per_voxel, two_v_two, EvaluationReport};
use crate::pca::PcaModel;
use crate::regression::{default_lambda_grid, select_lambda, RidgeModel, DEFAULT_CV_FOLDS};

mod cache;
pub mod report;

pub use cache::ModelCache;
pub use report::{
    aggregate, read_reports_json, render_svg, reports_csv, summary_csv, write_outputs, Summary,
    SummaryRow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    /// One encoder per task feature space.
    Baseline,
    Average,
    /// Power weights from per-task validation accuracy, one run per `p`.
    WeightedAverage,
    /// User-supplied weights from the plan.
    WeightedExplicit,
    Dynamic,
    StackPca,
    StackAverage,
}

impl MethodKind {
    pub const ALL: [MethodKind; 7] = [
        MethodKind::Baseline,
        MethodKind::Average,
        MethodKind::WeightedAverage,
        MethodKind::WeightedExplicit,
        MethodKind::Dynamic,
        MethodKind::StackPca,
        MethodKind::StackAverage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Baseline => "baseline",
            MethodKind::Average => "average",
            MethodKind::WeightedAverage => "weighted-average",
            MethodKind::WeightedExplicit => "weighted-explicit",
            MethodKind::Dynamic => "dynamic",
            MethodKind::StackPca => "stack-pca",
            MethodKind::StackAverage => "stack-average",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s}")))
    }
}

fn default_methods() -> Vec<MethodKind> {
    vec![
        MethodKind::Baseline,
        MethodKind::Average,
        MethodKind::WeightedAverage,
        MethodKind::Dynamic,
        MethodKind::StackPca,
        MethodKind::StackAverage,
    ]
}

pub fn default_p_values() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 3.0, 5.0, 10.0]
}

/// What to run. Deserialized from the plan file; every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub methods: Vec<MethodKind>,
    pub lambda_grid: Vec<f64>,
    pub cv_folds: usize,
    pub p_values: Vec<f64>,
    pub pca_k: usize,
    /// `lambda` inside is replaced by the encoder strength chosen per (subject, ROI).
    pub dynamic: DynamicWeightConfig,
    pub accuracy_metric: AccuracyMetric,
    /// Share of the training rows held out to score each task for power weights.
    pub accuracy_validation_fraction: f64,
    pub literal_power_mean: bool,
    pub pc_per_voxel: bool,
    pub explicit_weights: Option<Vec<f64>>,
    pub skip_baselines: bool,
    pub group_by_passage: bool,
    pub threads: Option<usize>,
    pub cache_dir: Option<PathBuf>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            methods: default_methods(),
            lambda_grid: default_lambda_grid(),
            cv_folds: DEFAULT_CV_FOLDS,
            p_values: default_p_values(),
            pca_k: 64,
            dynamic: DynamicWeightConfig::default(),
            accuracy_metric: AccuracyMetric::TwoVTwo,
            accuracy_validation_fraction: 0.2,
            literal_power_mean: false,
            pc_per_voxel: false,
            explicit_weights: None,
            skip_baselines: false,
            group_by_passage: false,
            threads: None,
            cache_dir: None,
        }
    }
}

impl ExperimentPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("plan: {e}")))
    }

    pub fn has(&self, kind: MethodKind) -> bool {
        self.methods.contains(&kind)
    }

    pub fn validate(&self, n_tasks: usize) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("plan lists no methods".into()));
        }
        if self.lambda_grid.is_empty()
            || self
                .lambda_grid
                .iter()
                .any(|l| !(*l >= 0.0 && l.is_finite()))
        {
            return Err(Error::Config(
                "lambda grid must be non-empty, finite, and nonnegative".into(),
            ));
        }
        if self.cv_folds < 2 {
            return Err(Error::Config("cv_folds must be at least 2".into()));
        }
        if self.has(MethodKind::WeightedAverage)
            && (self.p_values.is_empty()
                || self.p_values.iter().any(|p| *p == 0.0 || !p.is_finite()))
        {
            return Err(Error::Config(
                "p_values must be non-empty, finite, and nonzero".into(),
            ));
        }
        if self.pca_k == 0 {
            return Err(Error::Config("pca_k must be positive".into()));
        }
        if !(self.accuracy_validation_fraction > 0.0 && self.accuracy_validation_fraction < 0.5) {
            return Err(Error::Config(
                "accuracy_validation_fraction must lie in (0, 0.5)".into(),
            ));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        self.dynamic.validate()?;
        if self.has(MethodKind::WeightedExplicit) {
            let w = self
                .explicit_weights
                .as_ref()
                .ok_or_else(|| Error::Config("weighted-explicit needs explicit_weights".into()))?;
            if w.len() != n_tasks {
                return Err(Error::Config(format!(
                    "{} explicit weights for {n_tasks} tasks",
                    w.len()
                )));
            }
            WeightVector::normalized(w.clone())?;
        }
        if self.skip_baselines && self.has(MethodKind::WeightedAverage) {
            return Err(Error::MissingAccuracyTable);
        }
        Ok(())
    }

    fn needs_baselines(&self) -> bool {
        !self.skip_baselines
            && [
                MethodKind::Baseline,
                MethodKind::Average,
                MethodKind::WeightedAverage,
                MethodKind::WeightedExplicit,
                MethodKind::Dynamic,
            ]
            .iter()
            .any(|m| self.has(*m))
    }
}

/// How a fitted unit turns task matrices into encoder input.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    Task(usize),
    Average,
    Weighted(WeightVector),
    /// `sum_i w_i u_i / n` with unnormalized weights.
    LiteralWeighted(WeightVector),
    StackedPca(Vec<PcaModel>),
}

impl FeatureMap {
    pub fn build(&self, tasks: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
        match self {
            FeatureMap::Task(i) => Ok(tasks[*i].clone()),
            FeatureMap::Average => average_embeddings(tasks),
            FeatureMap::Weighted(w) => weighted_average(tasks, w),
            FeatureMap::LiteralWeighted(w) => literal_weighted_average(tasks, w),
            FeatureMap::StackedPca(models) => {
                let k = models.first().map_or(0, PcaModel::n_components);
                let mut out = DMatrix::zeros(tasks[0].nrows(), k * models.len());
                for (i, (model, task)) in models.iter().zip(tasks).enumerate() {
                    out.columns_mut(i * k, k).copy_from(&model.transform(task)?);
                }
                Ok(out)
            }
        }
    }

    pub fn weights(&self) -> Option<&WeightVector> {
        match self {
            FeatureMap::Weighted(w) | FeatureMap::LiteralWeighted(w) => Some(w),
            _ => None,
        }
    }
}

/// Everything fitted for one (subject, ROI, method, hyperparameter) cell.
#[derive(Debug, Clone)]
pub struct FittedUnit {
    pub response: usize,
    pub subject: String,
    pub roi: String,
    pub kind: MethodKind,
    pub method: String,
    pub p: Option<f64>,
    pub features: FeatureMap,
    pub encoder: RidgeModel,
    pub converged: Option<bool>,
}

impl FittedUnit {
    /// Serialized bytes of every fitted artifact of this unit.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.encoder.encode();
        match &self.features {
            FeatureMap::Weighted(w) | FeatureMap::LiteralWeighted(w) => {
                out.extend(serde_json::to_vec(w).expect("weights serialize"));
            }
            FeatureMap::StackedPca(models) => {
                for m in models {
                    out.extend(m.encode());
                }
            }
            FeatureMap::Task(_) | FeatureMap::Average => {}
        }
        out
    }
}

/// Fitted baselines plus what the ensembles reuse from them.
#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub units: Vec<FittedUnit>,
    pub accuracy: TaskAccuracyTable,
    /// Selected lambda per response, per task.
    pub lambdas: Vec<Vec<f64>>,
}

impl BaselineOutcome {
    /// Lower median of the per-task lambdas; the encoder strength reused by
    /// the averaging methods.
    pub fn inherited_lambda(&self, response: usize) -> f64 {
        let mut l = self.lambdas[response].clone();
        l.sort_by(f64::total_cmp);
        l[(l.len() - 1) / 2]
    }
}

struct Response {
    subject: String,
    roi: String,
    train_y: DMatrix<f64>,
    test_y: DMatrix<f64>,
}

/// A plan bound to data and a split.
pub struct Experiment {
    plan: ExperimentPlan,
    task_ids: Vec<String>,
    tasks: Vec<DMatrix<f64>>,
    train_tasks: Vec<DMatrix<f64>>,
    test_tasks: Vec<DMatrix<f64>>,
    responses: Vec<Response>,
    split: SplitSpec,
    cache: Option<ModelCache>,
}

impl Experiment {
    /// Binds raw matrices. Only training rows are required to be finite.
    pub fn from_parts(
        plan: ExperimentPlan,
        tasks: Vec<(String, DMatrix<f64>)>,
        responses: Vec<(String, String, DMatrix<f64>)>,
        split: SplitSpec,
    ) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::EmptyList);
        }
        plan.validate(tasks.len())?;
        if responses.is_empty() {
            return Err(Error::Config("no responses to encode".into()));
        }
        let n = tasks[0].1.nrows();
        let d = tasks[0].1.ncols();
        split.validate(n)?;
        let train_finite = |m: &DMatrix<f64>, what: &str| -> Result<()> {
            for &r in &split.train_indices {
                if let Some(c) = m.row(r).iter().position(|v| !v.is_finite()) {
                    log::error!("{what}: non-finite training value");
                    return Err(Error::NonFiniteValue { row: r, col: c });
                }
            }
            Ok(())
        };
        for (id, m) in &tasks {
            if m.shape() != (n, d) {
                return Err(Error::ShapeMismatch(format!(
                    "task {id} is {:?}, expected ({n}, {d})",
                    m.shape()
                )));
            }
            train_finite(m, id)?;
        }
        let responses = responses
            .into_iter()
            .map(|(subject, roi, y)| {
                if y.nrows() != n {
                    return Err(Error::ShapeMismatch(format!(
                        "response ({subject}, {roi}) has {} rows, expected {n}",
                        y.nrows()
                    )));
                }
                train_finite(&y, &subject)?;
                Ok(Response {
                    train_y: select_rows(&y, &split.train_indices),
                    test_y: select_rows(&y, &split.test_indices),
                    subject,
                    roi,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let cache = plan.cache_dir.as_ref().map(ModelCache::new).transpose()?;
        let (task_ids, tasks): (Vec<_>, Vec<_>) = tasks.into_iter().unzip();
        Ok(Self {
            train_tasks: tasks
                .iter()
                .map(|t| select_rows(t, &split.train_indices))
                .collect(),
            test_tasks: tasks
                .iter()
                .map(|t| select_rows(t, &split.test_indices))
                .collect(),
            task_ids,
            tasks,
            responses,
            split,
            plan,
            cache,
        })
    }

    pub fn from_dataset(plan: ExperimentPlan, dataset: Dataset, split: SplitSpec) -> Result<Self> {
        let tasks = dataset
            .tasks
            .into_iter()
            .map(|t| (t.task_id().to_string(), t.into_data()))
            .collect();
        let responses = dataset
            .responses
            .into_iter()
            .map(|r| {
                (
                    r.subject_id().to_string(),
                    r.roi_id().to_string(),
                    r.into_data(),
                )
            })
            .collect();
        Self::from_parts(plan, tasks, responses, split)
    }

    pub fn from_manifest(
        plan: ExperimentPlan,
        manifest: &DatasetManifest,
        seed: Option<u64>,
    ) -> Result<Self> {
        plan.validate(manifest.n_tasks())?;
        let split = manifest.split_spec(plan.group_by_passage, seed)?;
        Self::from_dataset(plan, manifest.load_data()?, split)
    }

    pub fn plan(&self) -> &ExperimentPlan {
        &self.plan
    }

    pub fn split(&self) -> &SplitSpec {
        &self.split
    }

    pub fn task_ids(&self) -> &[String] {
        &self.task_ids
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(t) = self.plan.threads {
            builder = builder.num_threads(t);
        }
        builder
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
    }

    fn cache(&self) -> Option<&ModelCache> {
        self.cache.as_ref()
    }

    fn select_lambda(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
        select_lambda(x, y, &self.plan.lambda_grid, self.plan.cv_folds)
    }

    fn fit_baseline(&self, response: usize, task: usize) -> Result<(FittedUnit, f64)> {
        let r = &self.responses[response];
        let x = &self.train_tasks[task];
        let lambda = self.select_lambda(x, &r.train_y)?;
        let encoder = cache::ridge(self.cache(), x, &r.train_y, lambda)?;

        let (fit_rows, val_rows) = inner_split(
            x.nrows(),
            self.plan.accuracy_validation_fraction,
            self.split.seed,
        )?;
        let inner = cache::ridge(
            self.cache(),
            &select_rows(x, &fit_rows),
            &select_rows(&r.train_y, &fit_rows),
            lambda,
        )?;
        let pred = inner.predict(&select_rows(x, &val_rows))?;
        let truth = select_rows(&r.train_y, &val_rows);
        let accuracy = match self.plan.accuracy_metric {
            AccuracyMetric::TwoVTwo => two_v_two(&truth, &pred)?,
            AccuracyMetric::Pearson => pearson_metric(&truth, &pred)?.clamp(0.0, 1.0),
        };

        let unit = FittedUnit {
            response,
            subject: r.subject.clone(),
            roi: r.roi.clone(),
            kind: MethodKind::Baseline,
            method: format!("baseline:{}", self.task_ids[task]),
            p: None,
            features: FeatureMap::Task(task),
            encoder,
            converged: None,
        };
        Ok((unit, accuracy))
    }

    /// Fits one encoder per (response, task) and scores every task on an
    /// inner validation fold of the training rows.
    pub fn fit_baselines(&self) -> Result<BaselineOutcome> {
        let n_tasks = self.tasks.len();
        let cells: Vec<(usize, usize)> = (0..self.responses.len())
            .flat_map(|r| (0..n_tasks).map(move |t| (r, t)))
            .collect();
        let fitted = self.pool()?.install(|| {
            cells
                .par_iter()
                .map(|&(r, t)| self.fit_baseline(r, t))
                .collect::<Result<Vec<_>>>()
        })?;

        let mut accuracy = TaskAccuracyTable::new(self.plan.accuracy_metric);
        let mut lambdas = Vec::with_capacity(self.responses.len());
        let mut units = Vec::with_capacity(fitted.len());
        for (r, chunk) in fitted.chunks(n_tasks).enumerate() {
            let resp = &self.responses[r];
            accuracy.insert(
                &resp.subject,
                &resp.roi,
                chunk.iter().map(|(_, a)| *a).collect(),
            )?;
            lambdas.push(chunk.iter().map(|(u, _)| u.encoder.lambda()).collect());
            units.extend(chunk.iter().map(|(u, _)| u.clone()));
        }
        Ok(BaselineOutcome {
            units,
            accuracy,
            lambdas,
        })
    }

    /// The (response, method, p) cells the ensemble stage produces.
    fn ensemble_cells(&self) -> Vec<(usize, MethodKind, Option<f64>)> {
        let mut cells = Vec::new();
        for r in 0..self.responses.len() {
            for &kind in &self.plan.methods {
                match kind {
                    MethodKind::Baseline => {}
                    MethodKind::WeightedAverage => {
                        cells.extend(self.plan.p_values.iter().map(|&p| (r, kind, Some(p))))
                    }
                    _ => cells.push((r, kind, None)),
                }
            }
        }
        cells
    }

    fn fit_ensemble(
        &self,
        response: usize,
        kind: MethodKind,
        p: Option<f64>,
        baselines: Option<&BaselineOutcome>,
        accuracy: Option<&TaskAccuracyTable>,
    ) -> Result<FittedUnit> {
        let r = &self.responses[response];
        let inherited = baselines.map(|b| b.inherited_lambda(response));
        let mut converged = None;

        let features = match kind {
            MethodKind::Baseline => unreachable!("baselines are fitted separately"),
            MethodKind::Average | MethodKind::StackAverage => FeatureMap::Average,
            MethodKind::WeightedAverage => {
                let p = p.expect("weighted-average cells carry p");
                let x = accuracy
                    .ok_or(Error::MissingAccuracyTable)?
                    .get(&r.subject, &r.roi)
                    .ok_or(Error::MissingAccuracyTable)?;
                if self.plan.literal_power_mean {
                    FeatureMap::LiteralWeighted(literal_power_mean(x, p)?)
                } else {
                    FeatureMap::Weighted(power_weights(x, p)?)
                }
            }
            MethodKind::WeightedExplicit => FeatureMap::Weighted(WeightVector::normalized(
                self.plan.explicit_weights.clone().unwrap_or_default(),
            )?),
            MethodKind::Dynamic => {
                let lambda = match inherited {
                    Some(l) => l,
                    None => {
                        self.select_lambda(&average_embeddings(&self.train_tasks)?, &r.train_y)?
                    }
                };
                let cfg = DynamicWeightConfig {
                    lambda: lambda.max(f64::MIN_POSITIVE),
                    ..self.plan.dynamic.clone()
                };
                let fit = fit_dynamic_weights(&self.train_tasks, &r.train_y, &cfg)?;
                converged = Some(fit.converged);
                FeatureMap::Weighted(fit.weights)
            }
            MethodKind::StackPca => {
                let stacked = crate::ensemble::stack_pca_with(
                    &self.tasks,
                    self.plan.pca_k,
                    &self.split,
                    |x, k| cache::pca(self.cache(), x, k),
                )?;
                FeatureMap::StackedPca(stacked.models)
            }
        };

        let train_features = match kind {
            MethodKind::StackAverage => stack_average(&self.train_tasks)?,
            _ => features.build(&self.train_tasks)?,
        };
        let lambda = match (kind, inherited) {
            (MethodKind::StackPca | MethodKind::StackAverage, _) | (_, None) => {
                self.select_lambda(&train_features, &r.train_y)?
            }
            (_, Some(l)) => l,
        };
        let encoder = cache::ridge(self.cache(), &train_features, &r.train_y, lambda)?;

        Ok(FittedUnit {
            response,
            subject: r.subject.clone(),
            roi: r.roi.clone(),
            kind,
            method: kind.name().to_string(),
            p,
            features,
            encoder,
            converged,
        })
    }

    /// Fits every ensemble cell. `accuracy` overrides the table carried by
    /// `baselines` when given.
    pub fn fit_ensembles(
        &self,
        baselines: Option<&BaselineOutcome>,
        accuracy: Option<&TaskAccuracyTable>,
    ) -> Result<Vec<FittedUnit>> {
        let accuracy = accuracy.or(baselines.map(|b| &b.accuracy));
        if self.plan.has(MethodKind::WeightedAverage) && accuracy.is_none() {
            return Err(Error::MissingAccuracyTable);
        }
        let cells = self.ensemble_cells();
        self.pool()?.install(|| {
            cells
                .par_iter()
                .map(|&(r, kind, p)| self.fit_ensemble(r, kind, p, baselines, accuracy))
                .collect()
        })
    }

    /// Scores a fitted unit on the test rows.
    pub fn evaluate(&self, unit: &FittedUnit) -> Result<EvaluationReport> {
        let r = &self.responses[unit.response];
        let features = unit.features.build(&self.test_tasks)?;
        let pred = unit.encoder.predict(&features)?;
        let pearson = if self.plan.pc_per_voxel {
            pearson_per_voxel(&r.test_y, &pred)?
        } else {
            pearson_metric(&r.test_y, &pred)?
        };
        Ok(EvaluationReport {
            subject: unit.subject.clone(),
            roi: unit.roi.clone(),
            method: unit.method.clone(),
            p: unit.p,
            pearson,
            two_v_two: two_v_two(&r.test_y, &pred)?,
            lambda: unit.encoder.lambda(),
            n_test: r.test_y.nrows(),
            v_voxels: r.test_y.ncols(),
            weights: unit.features.weights().map(|w| w.as_slice().to_vec()),
            converged: unit.converged,
        })
    }

    fn evaluate_all(&self, units: &[FittedUnit]) -> Result<Vec<EvaluationReport>> {
        self.pool()?
            .install(|| units.par_iter().map(|u| self.evaluate(u)).collect())
    }

    /// Fits and evaluates the per-task baselines.
    pub fn run_baselines(&self) -> Result<(BaselineOutcome, Vec<EvaluationReport>)> {
        let outcome = self.fit_baselines()?;
        let reports = self.evaluate_all(&outcome.units)?;
        Ok((outcome, reports))
    }

    /// Fits and evaluates the ensemble methods of the plan.
    pub fn run_ensembles(
        &self,
        baselines: Option<&BaselineOutcome>,
        accuracy: Option<&TaskAccuracyTable>,
    ) -> Result<Vec<EvaluationReport>> {
        let units = self.fit_ensembles(baselines, accuracy)?;
        self.evaluate_all(&units)
    }

    /// Fits every unit of the plan without touching test rows.
    pub fn fit_all(&self) -> Result<Vec<FittedUnit>> {
        let baselines = if self.plan.needs_baselines() {
            Some(self.fit_baselines()?)
        } else {
            None
        };
        let mut units = match (&baselines, self.plan.has(MethodKind::Baseline)) {
            (Some(b), true) => b.units.clone(),
            _ => Vec::new(),
        };
        units.extend(self.fit_ensembles(baselines.as_ref(), None)?);
        units.sort_by_key(|u| u.response);
        Ok(units)
    }

    /// The full grid: one report per (subject, ROI, method, hyperparameter),
    /// grouped by response in manifest order.
    pub fn run(&self) -> Result<Vec<EvaluationReport>> {
        let units = self.fit_all()?;
        self.evaluate_all(&units)
    }

    /// Number of reports [`Experiment::run`] produces.
    pub fn expected_report_count(&self) -> usize {
        let per_response: usize = self
            .plan
            .methods
            .iter()
            .map(|m| match m {
                MethodKind::Baseline if self.plan.needs_baselines() => self.tasks.len(),
                MethodKind::Baseline => 0,
                MethodKind::WeightedAverage => self.plan.p_values.len(),
                _ => 1,
            })
            .sum();
        per_response * self.responses.len()
    }
}
