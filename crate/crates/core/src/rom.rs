//! Learned reduced dynamics and closures, a model store, and end-to-end
//! pipelines: integrate reduced coordinates, apply a closure once at the
//! final time, reconstruct the field and score it against the full model.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aim::{EulerGalerkinClosure, EulerGalerkinConfig};
use crate::dmaps::DoubleDmaps;
use crate::error::{check_len, Error, Result};
use crate::eval::{decompose_states, euclidean, mape, mse, ErrorDecomposition, MetricsBundle, MAPE_FLOOR};
use crate::integrate::{rk4, Trajectory};
use crate::io;
use crate::models::{ChafeeInfante, KuramotoSivashinsky, VectorField, ZeroField, CHAFEE_NU, KS_NU};
use crate::nn::{decoder_invert, train, Autoencoder, LeadingOutputs, Mlp, MlpDocument, TrainConfig, TrainReport};
use crate::pod::PodModel;
use crate::spectral::{reconstruct, BasisKind, BasisSpec, Grid, SpectralState, DEFAULT_GRID_NODES};

pub const GRAY_BOX_HIDDEN: [usize; 6] = [95; 6];
pub const LATENT_MAP_HIDDEN: [usize; 5] = [80; 5];
pub const POD_RHS_HIDDEN: [usize; 2] = [20; 2];
pub const DEFAULT_HIDDEN: [usize; 4] = [64; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Chafee,
    Ks,
}

impl ModelKind {
    pub fn basis_kind(self) -> BasisKind {
        match self {
            ModelKind::Chafee => BasisKind::SineDirichlet,
            ModelKind::Ks => BasisKind::SinePeriodicOdd,
        }
    }

    pub fn default_nu(self) -> f64 {
        match self {
            ModelKind::Chafee => CHAFEE_NU,
            ModelKind::Ks => KS_NU,
        }
    }

    /// Mode counts of the reference model and of the reduced model.
    pub fn default_modes(self) -> (usize, usize) {
        match self {
            ModelKind::Chafee => (3, 2),
            ModelKind::Ks => (8, 3),
        }
    }

    pub fn galerkin(self, nu: f64, n_modes: usize) -> Result<Arc<dyn VectorField>> {
        Ok(match self {
            ModelKind::Chafee => Arc::new(ChafeeInfante::new(nu, n_modes)?),
            ModelKind::Ks => Arc::new(KuramotoSivashinsky::new(nu, n_modes)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatentRoute {
    Fourier,
    Pod,
    Autoencoder,
    Dmaps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsKind {
    Truncated,
    BlackBox,
    GrayBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosureKind {
    None,
    EulerGalerkin,
    Mlp,
    DoubleDmaps,
    DecoderInversion,
}

/// The known part of a gray-box field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum BaseField {
    Galerkin { model: ModelKind, nu: f64, n_modes: usize },
    Zero { dim: usize },
}

impl BaseField {
    pub fn dim(&self) -> usize {
        match self {
            BaseField::Galerkin { n_modes, .. } => *n_modes,
            BaseField::Zero { dim } => *dim,
        }
    }

    pub fn build(&self) -> Result<Arc<dyn VectorField>> {
        match self {
            BaseField::Galerkin { model, nu, n_modes } => model.galerkin(*nu, *n_modes),
            BaseField::Zero { dim } => Ok(Arc::new(ZeroField(*dim))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    BlackBox,
    GrayBox,
}

/// `dx/dt = net(x)` or `dx/dt = base(x) + net(x)`.
#[derive(Clone)]
pub struct LearnedField {
    kind: FieldKind,
    base: Option<BaseField>,
    base_field: Option<Arc<dyn VectorField>>,
    net: Mlp,
}

impl std::fmt::Debug for LearnedField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LearnedField")
            .field("kind", &self.kind)
            .field("base", &self.base)
            .field("net", &self.net.layer_sizes())
            .finish()
    }
}

impl PartialEq for LearnedField {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.base == other.base && self.net == other.net
    }
}

pub const FIELD_SCHEMA: &str = "aimrom.learned-field/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnedFieldDocument {
    pub schema: String,
    pub kind: FieldKind,
    pub base: Option<BaseField>,
    pub net: MlpDocument,
}

impl LearnedField {
    pub fn new(kind: FieldKind, base: Option<BaseField>, net: Mlp) -> Result<Self> {
        let dim = net.input_dim();
        check_len("learned field output", dim, net.output_dim())?;
        let base_field = match (kind, &base) {
            (FieldKind::BlackBox, None) => None,
            (FieldKind::GrayBox, Some(b)) => {
                check_len("gray-box base", dim, b.dim())?;
                Some(b.build()?)
            }
            (FieldKind::BlackBox, Some(_)) => {
                return Err(Error::InvalidInput("a black-box field has no base".into()))
            }
            (FieldKind::GrayBox, None) => return Err(Error::InvalidInput("a gray-box field needs a base".into())),
        };
        Ok(Self {
            kind,
            base,
            base_field,
            net,
        })
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn base(&self) -> Option<&BaseField> {
        self.base.as_ref()
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    /// The learned term alone.
    pub fn correction(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.net.forward(ArrayView1::from(x))?.to_vec())
    }

    pub fn to_document(&self, seed: u64, metadata: BTreeMap<String, String>) -> LearnedFieldDocument {
        LearnedFieldDocument {
            schema: FIELD_SCHEMA.into(),
            kind: self.kind,
            base: self.base.clone(),
            net: self.net.to_document(seed, metadata),
        }
    }

    pub fn from_document(doc: &LearnedFieldDocument) -> Result<Self> {
        if doc.schema != FIELD_SCHEMA {
            return Err(Error::InvalidInput(format!("unsupported field schema '{}'", doc.schema)));
        }
        Self::new(doc.kind, doc.base.clone(), Mlp::from_document(&doc.net)?)
    }
}

impl VectorField for LearnedField {
    fn dim(&self) -> usize {
        self.net.input_dim()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self.net.forward(ArrayView1::from(x)) {
            Ok(y) => out.copy_from_slice(y.as_slice().expect("contiguous output")),
            Err(_) => out.fill(f64::NAN),
        }
        if let Some(base) = &self.base_field {
            let b = base.eval(x);
            for (o, v) in out.iter_mut().zip(b) {
                *o += v;
            }
        }
    }
}

/// Leading `n_lead` components of the snapshots and of the full right-hand
/// side evaluated on them.
pub fn true_derivatives<F: VectorField + ?Sized>(
    full: &F,
    snapshots: ArrayView2<f64>,
    n_lead: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_len("snapshot dimension", full.dim(), snapshots.ncols())?;
    if n_lead == 0 || n_lead > full.dim() {
        return Err(Error::InvalidInput(format!("cannot keep {n_lead} of {} components", full.dim())));
    }
    let mut derivs = Array2::zeros((snapshots.nrows(), n_lead));
    let mut buf = vec![0.0; full.dim()];
    for (row, mut d) in snapshots.rows().into_iter().zip(derivs.rows_mut()) {
        full.eval_into(&row.to_vec(), &mut buf);
        d.assign(&ArrayView1::from(&buf[..n_lead]));
    }
    Ok((snapshots.slice(s![.., ..n_lead]).to_owned(), derivs))
}

fn fit_net(x: ArrayView2<f64>, y: ArrayView2<f64>, hidden: &[usize], cfg: &TrainConfig) -> Result<(Mlp, TrainReport)> {
    check_len("training pairs", x.nrows(), y.nrows())?;
    let mut sizes = vec![x.ncols()];
    sizes.extend_from_slice(hidden);
    sizes.push(y.ncols());
    train(&Mlp::new(&sizes, cfg.seed)?, x, y, cfg)
}

/// Regression `x ↦ dx/dt` on sampled states and derivatives.
pub fn learn_black_box(
    states: ArrayView2<f64>,
    derivs: ArrayView2<f64>,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<(LearnedField, TrainReport)> {
    check_len("derivative dimension", states.ncols(), derivs.ncols())?;
    let (net, report) = fit_net(states, derivs, hidden, cfg)?;
    Ok((LearnedField::new(FieldKind::BlackBox, None, net)?, report))
}

/// Regression of the residual `dx/dt − base(x)`.
pub fn learn_gray_box(
    states: ArrayView2<f64>,
    derivs: ArrayView2<f64>,
    base: BaseField,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<(LearnedField, TrainReport)> {
    check_len("derivative dimension", states.ncols(), derivs.ncols())?;
    check_len("gray-box base", states.ncols(), base.dim())?;
    let field = base.build()?;
    let mut residual = derivs.to_owned();
    for (x, mut r) in states.rows().into_iter().zip(residual.rows_mut()) {
        let b = field.eval(&x.to_vec());
        r -= &ArrayView1::from(&b);
    }
    let (net, report) = fit_net(states, residual.view(), hidden, cfg)?;
    Ok((LearnedField::new(FieldKind::GrayBox, Some(base), net)?, report))
}

/// Regression from leading coefficients to latent coordinates.
pub fn learn_latent_map(
    alpha_lead: ArrayView2<f64>,
    latents: ArrayView2<f64>,
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainReport)> {
    fit_net(alpha_lead, latents, hidden, cfg)
}

/// A trained object held by a [`ModelStore`].
#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Mlp(Mlp),
    Field(LearnedField),
    Autoencoder(Autoencoder),
    DoubleDmaps(Box<DoubleDmaps>),
    Pod(PodModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "artifact", rename_all = "kebab-case")]
pub enum ArtifactDocument {
    Mlp { net: MlpDocument },
    Field { field: LearnedFieldDocument },
    Autoencoder { encoder: MlpDocument, decoder: MlpDocument },
    DoubleDmaps { model: Box<DoubleDmaps> },
    Pod { model: PodModel },
}

impl Artifact {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Artifact::Mlp(_) => "mlp",
            Artifact::Field(_) => "field",
            Artifact::Autoencoder(_) => "autoencoder",
            Artifact::DoubleDmaps(_) => "double-dmaps",
            Artifact::Pod(_) => "pod",
        }
    }

    pub fn to_document(&self, metadata: &BTreeMap<String, String>) -> ArtifactDocument {
        let seed = metadata.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0);
        match self {
            Artifact::Mlp(m) => ArtifactDocument::Mlp {
                net: m.to_document(seed, metadata.clone()),
            },
            Artifact::Field(f) => ArtifactDocument::Field {
                field: f.to_document(seed, metadata.clone()),
            },
            Artifact::Autoencoder(ae) => ArtifactDocument::Autoencoder {
                encoder: ae.encoder.to_document(seed, metadata.clone()),
                decoder: ae.decoder.to_document(seed, metadata.clone()),
            },
            Artifact::DoubleDmaps(d) => ArtifactDocument::DoubleDmaps { model: d.clone() },
            Artifact::Pod(p) => ArtifactDocument::Pod { model: p.clone() },
        }
    }

    pub fn from_document(doc: &ArtifactDocument) -> Result<Self> {
        Ok(match doc {
            ArtifactDocument::Mlp { net } => Artifact::Mlp(Mlp::from_document(net)?),
            ArtifactDocument::Field { field } => Artifact::Field(LearnedField::from_document(field)?),
            ArtifactDocument::Autoencoder { encoder, decoder } => Artifact::Autoencoder(Autoencoder {
                encoder: Mlp::from_document(encoder)?,
                decoder: Mlp::from_document(decoder)?,
            }),
            ArtifactDocument::DoubleDmaps { model } => Artifact::DoubleDmaps(model.clone()),
            ArtifactDocument::Pod { model } => Artifact::Pod(model.clone()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub kind: String,
    pub hash: String,
    pub file: String,
    pub metadata: BTreeMap<String, String>,
}

/// Trained models addressed by alias, persisted as one JSON document per
/// model named by its content hash plus an `index.json` of aliases.
#[derive(Debug, Clone, Default)]
pub struct ModelStore {
    models: BTreeMap<String, Artifact>,
    entries: BTreeMap<String, StoreEntry>,
    documents: BTreeMap<String, String>,
}

pub const STORE_INDEX: &str = "index.json";

impl ModelStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces `alias`; returns the content hash of its document.
    pub fn insert(&mut self, alias: &str, artifact: Artifact, metadata: BTreeMap<String, String>) -> Result<String> {
        let text = serde_json::to_string_pretty(&artifact.to_document(&metadata))?;
        let hash = io::content_hash(text.as_bytes());
        self.entries.insert(
            alias.to_string(),
            StoreEntry {
                kind: artifact.kind_name().into(),
                hash: hash.clone(),
                file: format!("{hash}.json"),
                metadata,
            },
        );
        self.documents.insert(alias.to_string(), text);
        self.models.insert(alias.to_string(), artifact);
        Ok(hash)
    }

    pub fn aliases(&self) -> Vec<String> {
        self.models.keys().cloned().collect()
    }

    pub fn entry(&self, alias: &str) -> Option<&StoreEntry> {
        self.entries.get(alias)
    }

    pub fn get(&self, alias: &str) -> Result<&Artifact> {
        self.models.get(alias).ok_or_else(|| Error::MissingArtifact {
            alias: alias.to_string(),
            available: self.aliases(),
        })
    }

    fn wrong_kind(alias: &str, want: &str, got: &Artifact) -> Error {
        Error::InvalidInput(format!("model '{alias}' is a {}, expected a {want}", got.kind_name()))
    }

    pub fn mlp(&self, alias: &str) -> Result<&Mlp> {
        match self.get(alias)? {
            Artifact::Mlp(m) => Ok(m),
            other => Err(Self::wrong_kind(alias, "mlp", other)),
        }
    }

    pub fn field(&self, alias: &str) -> Result<&LearnedField> {
        match self.get(alias)? {
            Artifact::Field(f) => Ok(f),
            other => Err(Self::wrong_kind(alias, "field", other)),
        }
    }

    pub fn autoencoder(&self, alias: &str) -> Result<&Autoencoder> {
        match self.get(alias)? {
            Artifact::Autoencoder(a) => Ok(a),
            other => Err(Self::wrong_kind(alias, "autoencoder", other)),
        }
    }

    pub fn double_dmaps(&self, alias: &str) -> Result<&DoubleDmaps> {
        match self.get(alias)? {
            Artifact::DoubleDmaps(d) => Ok(d),
            other => Err(Self::wrong_kind(alias, "double-dmaps", other)),
        }
    }

    pub fn pod(&self, alias: &str) -> Result<&PodModel> {
        match self.get(alias)? {
            Artifact::Pod(p) => Ok(p),
            other => Err(Self::wrong_kind(alias, "pod", other)),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (alias, entry) in &self.entries {
            std::fs::write(dir.join(&entry.file), &self.documents[alias])?;
        }
        io::write_json(&dir.join(STORE_INDEX), &self.entries)
    }

    /// Loads a store directory; a missing directory or index yields an empty store.
    pub fn open(dir: &Path) -> Result<Self> {
        let index = dir.join(STORE_INDEX);
        if !index.exists() {
            return Ok(Self::new());
        }
        let entries: BTreeMap<String, StoreEntry> = io::read_json(&index)?;
        let mut store = Self::new();
        for (alias, entry) in entries {
            let path: PathBuf = dir.join(&entry.file);
            let text = std::fs::read_to_string(&path)?;
            if io::content_hash(text.as_bytes()) != entry.hash {
                return Err(Error::InvalidInput(format!("{} does not match its recorded hash", path.display())));
            }
            let doc: ArtifactDocument = serde_json::from_str(&text)?;
            store.models.insert(alias.clone(), Artifact::from_document(&doc)?);
            store.documents.insert(alias.clone(), text);
            store.entries.insert(alias, entry);
        }
        Ok(store)
    }
}

/// Aliases of the stored models a pipeline uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineModels {
    /// Learned field for black-box or gray-box dynamics.
    pub dynamics: String,
    /// Closure network for the `mlp` closure.
    pub closure: String,
    /// Autoencoder, double diffusion map or POD model of the latent route.
    pub latent: String,
    /// Network from reduced coordinates to latent coordinates.
    pub latent_map: String,
}

impl Default for PipelineModels {
    fn default() -> Self {
        Self {
            dynamics: "dynamics".into(),
            closure: "closure".into(),
            latent: "latent".into(),
            latent_map: "latent_map".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionSettings {
    pub max_iter: usize,
    pub initial_step: f64,
    /// Starting points: the encoder image of the zero-padded state plus seeded perturbations of it.
    pub n_candidates: usize,
    pub perturbation: f64,
}

impl Default for InversionSettings {
    fn default() -> Self {
        Self {
            max_iter: 500,
            initial_step: 0.1,
            n_candidates: 4,
            perturbation: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub model: ModelKind,
    pub latent_route: LatentRoute,
    pub dynamics: DynamicsKind,
    pub closure: ClosureKind,
    pub final_time: f64,
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to the model's standard viscosity.
    #[serde(default)]
    pub nu: Option<f64>,
    /// Modes of the reference model (3 for Chafee–Infante, 8 for Kuramoto–Sivashinsky by default).
    #[serde(default)]
    pub n_full: Option<usize>,
    /// Dimension of the integrated reduced coordinates.
    #[serde(default)]
    pub n_reduced: Option<usize>,
    /// Full-model initial coefficients.
    #[serde(default)]
    pub initial_condition: Option<Vec<f64>>,
    #[serde(default)]
    pub models: PipelineModels,
    #[serde(default)]
    pub inversion: InversionSettings,
    /// Every how many steps the error series is sampled.
    #[serde(default = "one")]
    pub record_stride: usize,
}

fn one() -> usize {
    1
}

impl PipelineConfig {
    pub fn new(model: ModelKind, route: LatentRoute, dynamics: DynamicsKind, closure: ClosureKind, final_time: f64, dt: f64) -> Self {
        Self {
            model,
            latent_route: route,
            dynamics,
            closure,
            final_time,
            dt,
            seed: 0,
            nu: None,
            n_full: None,
            n_reduced: None,
            initial_condition: None,
            models: PipelineModels::default(),
            inversion: InversionSettings::default(),
            record_stride: 1,
        }
    }

    pub fn nu(&self) -> f64 {
        self.nu.unwrap_or_else(|| self.model.default_nu())
    }

    pub fn n_full(&self) -> usize {
        self.n_full.unwrap_or(self.model.default_modes().0)
    }

    pub fn n_reduced(&self) -> usize {
        self.n_reduced.unwrap_or(self.model.default_modes().1)
    }

    pub fn basis(&self) -> Result<BasisSpec> {
        BasisSpec::new(self.model.basis_kind(), self.n_full())
    }

    /// Rejects incompatible combinations before any computation.
    pub fn validate(&self) -> Result<()> {
        use ClosureKind as C;
        use LatentRoute as R;
        let bad = |m: &str| Err(Error::IncompatibleConfig(m.into()));
        if !(self.final_time > 0.0 && self.final_time.is_finite()) || !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("final_time and dt must be positive");
        }
        if !(self.nu() > 0.0) {
            return bad("nu must be positive");
        }
        let (nf, nr) = (self.n_full(), self.n_reduced());
        if nr == 0 || nr >= nf {
            return bad("need 0 < n_reduced < n_full");
        }
        if self.record_stride == 0 {
            return bad("record_stride must be positive");
        }
        if self.model == ModelKind::Chafee && nf != 3 {
            return bad("the Chafee-Infante reference model has 3 modes");
        }
        if self.latent_route == R::Pod && self.dynamics != DynamicsKind::BlackBox {
            return bad("POD coordinates have no Galerkin truncation; use black-box dynamics");
        }
        match (self.closure, self.latent_route) {
            (C::None, _) => {}
            (C::EulerGalerkin, R::Fourier) if self.model == ModelKind::Chafee => {}
            (C::EulerGalerkin, _) => return bad("the euler-galerkin closure needs the fourier route and the chafee model"),
            (C::Mlp, R::Fourier | R::Autoencoder | R::Pod) => {}
            (C::Mlp, R::Dmaps) => return bad("use the double-dmaps closure with the dmaps route"),
            (C::DoubleDmaps, R::Dmaps) => {}
            (C::DoubleDmaps, _) => return bad("the double-dmaps closure needs the dmaps route"),
            (C::DecoderInversion, R::Autoencoder) => {}
            (C::DecoderInversion, _) => return bad("decoder inversion needs the autoencoder route"),
        }
        if let Some(ic) = &self.initial_condition {
            if ic.len() != nf {
                return bad("initial_condition must have n_full entries");
            }
        }
        Ok(())
    }

    /// Checks that every model the configuration needs is in `store` with the right kind.
    pub fn check_models(&self, store: &ModelStore) -> Result<()> {
        if self.dynamics != DynamicsKind::Truncated {
            let f = store.field(&self.models.dynamics)?;
            check_len("stored dynamics dimension", self.n_reduced(), VectorField::dim(f))?;
            let want = match self.dynamics {
                DynamicsKind::BlackBox => FieldKind::BlackBox,
                _ => FieldKind::GrayBox,
            };
            if f.kind() != want {
                return Err(Error::IncompatibleConfig(format!(
                    "stored field '{}' is {:?}, the configuration asks for {:?} dynamics",
                    self.models.dynamics,
                    f.kind(),
                    self.dynamics
                )));
            }
        }
        match (self.latent_route, self.closure) {
            (LatentRoute::Pod, _) => {
                store.pod(&self.models.latent)?;
            }
            (LatentRoute::Autoencoder, ClosureKind::Mlp) => {
                store.autoencoder(&self.models.latent)?;
                store.mlp(&self.models.latent_map)?;
            }
            (LatentRoute::Autoencoder, ClosureKind::DecoderInversion) => {
                store.autoencoder(&self.models.latent)?;
            }
            (LatentRoute::Dmaps, ClosureKind::DoubleDmaps) => {
                store.double_dmaps(&self.models.latent)?;
                store.mlp(&self.models.latent_map)?;
            }
            _ => {}
        }
        if self.closure == ClosureKind::Mlp && self.latent_route != LatentRoute::Autoencoder {
            store.mlp(&self.models.closure)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub initial_condition: Vec<f64>,
    /// Integrated reduced coordinates.
    pub reduced: Trajectory,
    /// Reference-model trajectory from the same initial condition.
    pub truth: Trajectory,
    /// Post-processed full coefficients at the final time.
    pub final_state: SpectralState,
    /// Full coefficients without any closure.
    pub raw_state: SpectralState,
    pub truth_state: SpectralState,
    pub grid: Vec<f64>,
    pub u_truth: Vec<f64>,
    pub u_raw: Vec<f64>,
    pub u_post: Vec<f64>,
    pub metrics: MetricsBundle,
    /// Δ1 is measured in the integrated reduced coordinates.
    pub decomposition: ErrorDecomposition,
}

fn row(a: &Array2<f64>, i: usize) -> Array1<f64> {
    a.row(i).to_owned()
}

/// Runs the pipeline from `cfg.initial_condition`.
pub fn run_pipeline(cfg: &PipelineConfig, store: &ModelStore) -> Result<PipelineOutput> {
    cfg.validate()?;
    let ic = cfg
        .initial_condition
        .clone()
        .ok_or_else(|| Error::IncompatibleConfig("initial_condition is required".into()))?;
    run_pipeline_from(cfg, store, &ic)
}

/// Reduced coordinates of a full coefficient vector.
fn reduce(cfg: &PipelineConfig, store: &ModelStore, full: ArrayView1<f64>) -> Result<Array1<f64>> {
    let nr = cfg.n_reduced();
    match cfg.latent_route {
        LatentRoute::Pod => store.pod(&cfg.models.latent)?.project(full, nr),
        _ => Ok(full.slice(s![..nr]).to_owned()),
    }
}

/// Full coefficients from final reduced coordinates, without and with the closure.
fn lift(cfg: &PipelineConfig, store: &ModelStore, r: ArrayView1<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
    let (nf, nr) = (cfg.n_full(), cfg.n_reduced());
    let padded = |head: &Array1<f64>, tail: &Array1<f64>| -> Result<Array1<f64>> {
        check_len("lifted state", nf, head.len() + tail.len())?;
        Ok(ndarray::concatenate(Axis(0), &[head.view(), tail.view()]).expect("1-d concatenation"))
    };
    let r_owned = r.to_owned();
    if cfg.latent_route == LatentRoute::Pod {
        let pod = store.pod(&cfg.models.latent)?;
        let raw = pod.lift(r, nr)?;
        let post = match cfg.closure {
            ClosureKind::None => raw.clone(),
            _ => {
                let high = store.mlp(&cfg.models.closure)?.forward(r)?;
                let c = ndarray::concatenate(Axis(0), &[r_owned.view(), high.view()]).expect("1-d concatenation");
                pod.lift(c.view(), c.len())?
            }
        };
        return Ok((raw, post));
    }
    let zeros = Array1::zeros(nf - nr);
    let raw = padded(&r_owned, &zeros)?;
    let high: Array1<f64> = match cfg.closure {
        ClosureKind::None => zeros.clone(),
        ClosureKind::EulerGalerkin => {
            let closure = EulerGalerkinClosure {
                cfg: EulerGalerkinConfig::chafee(cfg.nu(), 1.0)?,
            };
            Array1::from(crate::aim::Closure::map(&closure, r.as_slice().expect("contiguous"))?)
        }
        ClosureKind::Mlp if cfg.latent_route == LatentRoute::Autoencoder => {
            let ae = store.autoencoder(&cfg.models.latent)?;
            let latent = store.mlp(&cfg.models.latent_map)?.forward(r)?;
            ae.decode(latent.view())?.slice_move(s![nr..])
        }
        ClosureKind::Mlp => store.mlp(&cfg.models.closure)?.forward(r)?,
        ClosureKind::DoubleDmaps => {
            let dd = store.double_dmaps(&cfg.models.latent)?;
            let phi = store.mlp(&cfg.models.latent_map)?.forward(r)?;
            dd.lift(phi.view())?.slice_move(s![nr..])
        }
        ClosureKind::DecoderInversion => {
            let ae = store.autoencoder(&cfg.models.latent)?;
            let lead = LeadingOutputs::new(&ae.decoder, nr)?;
            let start = ae.encode(raw.view())?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let n_cand = cfg.inversion.n_candidates.max(1);
            let cands = Array2::from_shape_fn((n_cand, start.len()), |(i, j)| {
                if i == 0 {
                    start[j]
                } else {
                    start[j] + cfg.inversion.perturbation * rng.gen_range(-1.0..1.0)
                }
            });
            let inv = decoder_invert(&lead, r, cands.view(), cfg.inversion.max_iter, cfg.inversion.initial_step)?;
            ae.decode(ArrayView1::from(&inv.latent))?.slice_move(s![nr..])
        }
    };
    check_len("closure output", nf - nr, high.len())?;
    let post = padded(&r_owned, &high)?;
    Ok((raw, post))
}

/// Integrates the reduced dynamics and the reference model from `ic`,
/// post-processes the final reduced state and scores the result.
pub fn run_pipeline_from(cfg: &PipelineConfig, store: &ModelStore, ic: &[f64]) -> Result<PipelineOutput> {
    cfg.validate()?;
    cfg.check_models(store)?;
    let (nf, nr) = (cfg.n_full(), cfg.n_reduced());
    check_len("initial condition", nf, ic.len())?;
    let basis = cfg.basis()?;

    let full_field = cfg.model.galerkin(cfg.nu(), nf)?;
    let truth = rk4(&full_field, ic, cfg.final_time, cfg.dt)?;

    let r0 = reduce(cfg, store, ArrayView1::from(ic))?;
    let dynamics: Arc<dyn VectorField> = match cfg.dynamics {
        DynamicsKind::Truncated => cfg.model.galerkin(cfg.nu(), nr)?,
        _ => Arc::new(store.field(&cfg.models.dynamics)?.clone()),
    };
    let reduced = rk4(&dynamics, r0.as_slice().expect("contiguous"), cfg.final_time, cfg.dt)?;

    let r_final = row(&reduced.states, reduced.len() - 1);
    let (raw, post) = lift(cfg, store, r_final.view())?;
    if post.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("closure produced a non-finite state".into()));
    }
    let truth_final = row(&truth.states, truth.len() - 1);

    let grid = Grid::for_basis(&basis, DEFAULT_GRID_NODES)?;
    let truth_state = SpectralState::new(basis, truth_final.clone())?;
    let raw_state = SpectralState::new(basis, raw.clone())?;
    let final_state = SpectralState::new(basis, post.clone())?;
    let u_truth = reconstruct(&truth_state, &grid)?;
    let u_raw = reconstruct(&raw_state, &grid)?;
    let u_post = reconstruct(&final_state, &grid)?;

    let mut series = Vec::new();
    for i in (0..reduced.len()).step_by(cfg.record_stride).chain(std::iter::once(reduced.len() - 1)) {
        if series.last().map_or(false, |&(t, _)| t == reduced.times[i]) {
            continue;
        }
        let target = reduce(cfg, store, truth.states.row(i))?;
        series.push((reduced.times[i], mape(reduced.states.row(i), target.view(), MAPE_FLOOR)?));
    }
    let truth_reduced = reduce(cfg, store, truth_final.view())?;
    let decomposition = decompose_states(
        euclidean(truth_reduced.view(), r_final.view())?,
        &truth_state,
        &raw_state,
        &final_state,
        &grid,
    )?;
    let metrics = MetricsBundle {
        mape: mape(u_post.view(), u_truth.view(), MAPE_FLOOR)?,
        mse: mse(post.view(), truth_final.view())?,
        raw_mape: mape(u_raw.view(), u_truth.view(), MAPE_FLOOR)?,
        raw_mse: mse(raw.view(), truth_final.view())?,
        leading_mape: series.last().map(|s| s.1).unwrap_or(0.0),
        percent_error_series: series,
    };
    Ok(PipelineOutput {
        initial_condition: ic.to_vec(),
        reduced,
        truth,
        final_state,
        raw_state,
        truth_state,
        grid: grid.points().to_vec(),
        u_truth: u_truth.to_vec(),
        u_raw: u_raw.to_vec(),
        u_post: u_post.to_vec(),
        metrics,
        decomposition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aim::chafee_aim_alpha3;
    use crate::nn::Activation;
    use ndarray::array;

    fn quick_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 32,
            learning_rate: 5e-3,
            lr_decay: 0.995,
            validation_fraction: 0.1,
            ..Default::default()
        }
    }

    fn annealed_cfg() -> TrainConfig {
        TrainConfig {
            lr_decay: 0.999,
            learning_rate: 1e-2,
            batch_size: 16,
            ..quick_cfg(3000)
        }
    }

    #[test]
    fn black_box_learns_linear_decay() {
        let x = Array2::from_shape_fn((200, 1), |(i, _)| -1.0 + 2.0 * i as f64 / 199.0);
        let dx = x.mapv(|v| -v);
        let (field, _) = learn_black_box(x.view(), dx.view(), &[16, 16], &quick_cfg(600)).unwrap();
        let sup = (0..101)
            .map(|i| {
                let v = -1.0 + 2.0 * i as f64 / 100.0;
                (field.eval(&[v])[0] + v).abs()
            })
            .fold(0.0, f64::max);
        assert!(sup < 0.02, "{sup}");
    }

    #[test]
    fn zero_derivative_data() {
        let x = Array2::from_shape_fn((100, 2), |(i, j)| ((i * (j + 3)) % 17) as f64 / 17.0);
        let dx = Array2::zeros((100, 2));
        let (field, _) = learn_black_box(x.view(), dx.view(), &[8], &annealed_cfg()).unwrap();
        for r in x.rows() {
            assert!(field.eval(&r.to_vec()).iter().all(|v| v.abs() < 1e-3));
        }
    }

    #[test]
    fn gray_box_identity_and_exact_base() {
        let base = BaseField::Galerkin {
            model: ModelKind::Chafee,
            nu: CHAFEE_NU,
            n_modes: 2,
        };
        let galerkin = base.build().unwrap();
        let x = Array2::from_shape_fn((150, 2), |(i, j)| ((i * (2 * j + 5)) % 23) as f64 / 11.5 - 1.0);
        let dx = Array2::from_shape_fn((150, 2), |(i, j)| galerkin.eval(&x.row(i).to_vec())[j]);
        let (field, _) = learn_gray_box(x.view(), dx.view(), base, &[8], &annealed_cfg()).unwrap();
        for r in x.rows() {
            let v = r.to_vec();
            let total = field.eval(&v);
            let corr = field.correction(&v).unwrap();
            let b = galerkin.eval(&v);
            for k in 0..2 {
                assert!((total[k] - (b[k] + corr[k])).abs() < 1e-12);
                assert!(corr[k].abs() < 1e-3);
            }
        }
    }

    #[test]
    fn gray_box_with_zero_base_matches_black_box() {
        let x = Array2::from_shape_fn((60, 1), |(i, _)| i as f64 / 59.0);
        let dx = x.mapv(|v| v * v);
        let cfg = quick_cfg(30);
        let (bb, _) = learn_black_box(x.view(), dx.view(), &[6], &cfg).unwrap();
        let (gb, _) = learn_gray_box(x.view(), dx.view(), BaseField::Zero { dim: 1 }, &[6], &cfg).unwrap();
        assert_eq!(bb.net(), gb.net());
    }

    #[test]
    fn latent_map_identity() {
        let x = Array2::from_shape_fn((300, 2), |(i, j)| (((i * 7 + j * 13) % 50) as f64 / 25.0) - 1.0);
        let cfg = quick_cfg(300);
        let (net, report) = learn_latent_map(x.view(), x.view(), &[16], &cfg).unwrap();
        let pred = net.forward_batch(x.view()).unwrap();
        assert!((&pred - &x).mapv(|v| v * v).mean().unwrap() < 1e-4);
        let (again, report2) = learn_latent_map(x.view(), x.view(), &[16], &cfg).unwrap();
        assert_eq!(net, again);
        assert_eq!(report, report2);
    }

    fn chafee_cfg(closure: ClosureKind) -> PipelineConfig {
        let mut cfg = PipelineConfig::new(ModelKind::Chafee, LatentRoute::Fourier, DynamicsKind::Truncated, closure, 5.0, 1e-3);
        cfg.initial_condition = Some(vec![1.0, 0.5, 0.1]);
        cfg
    }

    #[test]
    fn euler_galerkin_pipeline_improves_truncation() {
        let store = ModelStore::new();
        let out = run_pipeline(&chafee_cfg(ClosureKind::EulerGalerkin), &store).unwrap();
        assert!(out.metrics.mape < out.metrics.raw_mape);
        let r = out.reduced.final_state();
        assert_eq!(out.final_state.coeffs()[2], chafee_aim_alpha3(r[0], r[1], CHAFEE_NU));
        // integrated coordinates are untouched
        assert_eq!(out.final_state.coeffs().slice(s![..2]), r);
        let d = out.decomposition;
        assert!(d.delta4 < d.delta3 && d.delta1 < d.delta3, "{d:?}");
        let closure = EulerGalerkinClosure {
            cfg: EulerGalerkinConfig::chafee(CHAFEE_NU, 1.0).unwrap(),
        };
        let grid = Grid::for_basis(&out.truth_state.basis(), DEFAULT_GRID_NODES).unwrap();
        let direct = crate::eval::decompose_errors(&out.truth, &out.reduced, BasisKind::SineDirichlet, &closure, &grid).unwrap();
        assert_eq!(direct, d);
    }

    #[test]
    fn no_closure_is_raw_truncation() {
        let store = ModelStore::new();
        let out = run_pipeline(&chafee_cfg(ClosureKind::None), &store).unwrap();
        assert_eq!(out.final_state, out.raw_state);
        assert_eq!(out.metrics.mape, out.metrics.raw_mape);
        assert_eq!(out.final_state.coeffs()[2], 0.0);
        let again = run_pipeline(&chafee_cfg(ClosureKind::None), &store).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn incompatible_configs_rejected() {
        let mut cfg = chafee_cfg(ClosureKind::EulerGalerkin);
        cfg.model = ModelKind::Ks;
        cfg.initial_condition = Some(vec![0.0; 8]);
        assert!(matches!(cfg.validate(), Err(Error::IncompatibleConfig(_))));
        let mut cfg = chafee_cfg(ClosureKind::DoubleDmaps);
        assert!(cfg.validate().is_err());
        cfg.closure = ClosureKind::DecoderInversion;
        assert!(cfg.validate().is_err());
        cfg.closure = ClosureKind::None;
        cfg.latent_route = LatentRoute::Pod;
        assert!(cfg.validate().is_err());
        let cfg = chafee_cfg(ClosureKind::Mlp);
        assert!(matches!(run_pipeline(&cfg, &ModelStore::new()), Err(Error::MissingArtifact { .. })));
    }

    #[test]
    fn mlp_closure_uses_store() {
        let w = array![[0.0, 0.0]];
        let net = Mlp::from_parts(vec![w], vec![array![0.25]], vec![Activation::Identity]).unwrap();
        let mut store = ModelStore::new();
        store.insert("closure", Artifact::Mlp(net), BTreeMap::new()).unwrap();
        let out = run_pipeline(&chafee_cfg(ClosureKind::Mlp), &store).unwrap();
        assert_eq!(out.final_state.coeffs()[2], 0.25);
    }

    #[test]
    fn store_round_trip() {
        let dir = std::env::temp_dir().join(format!("aimrom-store-{}", std::process::id()));
        let mut store = ModelStore::new();
        let net = Mlp::new(&[2, 3, 1], 5).unwrap();
        let field = LearnedField::new(
            FieldKind::GrayBox,
            Some(BaseField::Galerkin {
                model: ModelKind::Ks,
                nu: KS_NU,
                n_modes: 2,
            }),
            Mlp::new(&[2, 4, 2], 6).unwrap(),
        )
        .unwrap();
        let h1 = store.insert("closure", Artifact::Mlp(net.clone()), BTreeMap::new()).unwrap();
        store.insert("dynamics", Artifact::Field(field.clone()), BTreeMap::new()).unwrap();
        store.save(&dir).unwrap();
        let back = ModelStore::open(&dir).unwrap();
        assert_eq!(back.mlp("closure").unwrap(), &net);
        assert_eq!(back.field("dynamics").unwrap(), &field);
        assert_eq!(back.entry("closure").unwrap().hash, h1);
        assert!(dir.join(format!("{h1}.json")).exists());
        match back.get("missing") {
            Err(Error::MissingArtifact { available, .. }) => assert_eq!(available, vec!["closure", "dynamics"]),
            other => panic!("{other:?}"),
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
