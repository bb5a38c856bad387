//! Full architectures: stationary node classification (one input state
//! embedded into `o` initial conditions) and spatio-temporal forecasting
//! (parallel state and history streams), plus bit-exact checkpointing.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseOperator;
use crate::layers::{tde_step, time_embedding, SpatialTerm, TIME_EMBED_WIDTH};
use crate::rng::{RngStream, RootRng};
use crate::temporal::{AttentionTemporal, CoefficientVector, DirectTemporal, HistoryBuffer};
use crate::tensor::{Tape, Tensor};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TDEG";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Optimizer routing group of one learnable tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    /// Input/output embeddings, readouts, history mixers.
    Embedding,
    /// Temporal coefficient parameters (direct vector or attention weights).
    Temporal,
    /// Spatial channel-mixing weights and optional feature norms.
    Spatial,
}

/// Which temporal-coefficient mechanism a model uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TemporalVariant {
    Direct,
    Attention { heads: usize },
    /// Constant stencil excluded from learning; `[1]` gives the first-order
    /// baseline network.
    Frozen { stencil: Vec<f64> },
}

impl TemporalVariant {
    pub fn attention_default() -> TemporalVariant {
        TemporalVariant::Attention {
            heads: AttentionTemporal::DEFAULT_HEADS,
        }
    }
}

/// Dense affine map `x W + b` with fan-in uniform initialization.
pub struct Affine {
    weight: Tensor,
    bias: Tensor,
}

impl Affine {
    fn new(input_dim: usize, output_dim: usize, rng: &mut RngStream) -> Result<Affine> {
        let scale = 1.0 / (input_dim as f64).sqrt();
        let mut w = vec![0.0; input_dim * output_dim];
        rng.fill_uniform_centered(&mut w, scale);
        let mut b = vec![0.0; output_dim];
        rng.fill_uniform_centered(&mut b, scale);
        Ok(Affine {
            weight: Tensor::param(&[input_dim, output_dim], w)?,
            bias: Tensor::param(&[output_dim], b)?,
        })
    }

    pub fn apply(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor> {
        let product = tape.matmul(x, &self.weight)?;
        tape.add_bias(&product, &self.bias)
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }
}

enum TemporalMechanism {
    Direct(DirectTemporal),
    Attention(AttentionTemporal),
    Frozen(Tensor),
}

impl TemporalMechanism {
    fn build(
        variant: &TemporalVariant,
        order: usize,
        hidden_dim: usize,
        rng: &mut RngStream,
    ) -> Result<TemporalMechanism> {
        Ok(match variant {
            TemporalVariant::Direct => TemporalMechanism::Direct(DirectTemporal::new(order)?),
            TemporalVariant::Attention { heads } => {
                TemporalMechanism::Attention(AttentionTemporal::new(order, hidden_dim, *heads, rng)?)
            }
            TemporalVariant::Frozen { stencil } => {
                if stencil.len() != order {
                    return Err(Error::config(
                        "stencil",
                        format!("frozen stencil length {} != order {order}", stencil.len()),
                    ));
                }
                let sum: f64 = stencil.iter().sum();
                if (sum - 1.0).abs() > 1e-10 {
                    return Err(Error::config(
                        "stencil",
                        format!("frozen stencil sums to {sum}, expected 1"),
                    ));
                }
                TemporalMechanism::Frozen(Tensor::from_vec(&[order], stencil.clone())?)
            }
        })
    }

    fn coefficients(&self, tape: &mut Tape, history: &HistoryBuffer) -> Result<CoefficientVector> {
        match self {
            TemporalMechanism::Direct(direct) => direct.coefficients(tape),
            TemporalMechanism::Attention(attn) => attn.coefficients(tape, history),
            TemporalMechanism::Frozen(stencil) => CoefficientVector::from_tensor(stencil.clone()),
        }
    }

    /// Stencil values obtainable without a forward pass. Attention stencils
    /// are data-dependent, so they have none.
    fn static_coefficients(&self) -> Option<Vec<f64>> {
        match self {
            TemporalMechanism::Direct(direct) => {
                let raw = direct.raw().to_vec();
                let sum: f64 = raw.iter().sum();
                Some(raw.iter().map(|v| v / sum).collect())
            }
            TemporalMechanism::Frozen(stencil) => Some(stencil.to_vec()),
            TemporalMechanism::Attention(_) => None,
        }
    }
}

struct FeatureNorm {
    gamma: Tensor,
    beta: Tensor,
}

impl FeatureNorm {
    fn new(dim: usize) -> Result<FeatureNorm> {
        Ok(FeatureNorm {
            gamma: Tensor::param(&[dim], vec![1.0; dim])?,
            beta: Tensor::param(&[dim], vec![0.0; dim])?,
        })
    }
}

struct TdeLayer {
    spatial: SpatialTerm,
    temporal: TemporalMechanism,
    norm: Option<FeatureNorm>,
    hist_mixer: Option<Affine>,
}

impl TdeLayer {
    fn spatial_out(&self, tape: &mut Tape, op: &Arc<SparseOperator>, x: &Tensor) -> Result<Tensor> {
        let s = self.spatial.apply(tape, op, x)?;
        match &self.norm {
            Some(norm) => tape.batch_norm(&s, &norm.gamma, &norm.beta, 1e-5),
            None => Ok(s),
        }
    }
}

struct LayerSpec<'a> {
    variant: &'a TemporalVariant,
    hidden_dim: usize,
    order: usize,
    step_size: f64,
    batchnorm: bool,
    /// Input width of the history mixer, when this layer has one.
    mixer_input: Option<usize>,
}

fn build_layer(spec: &LayerSpec<'_>, index: usize, root: &RootRng) -> Result<TdeLayer> {
    let mut spatial_rng = root.stream(&format!("init/layer.{index}.spatial"));
    let spatial = SpatialTerm::new(spec.hidden_dim, spec.step_size, &mut spatial_rng)?;
    let mut temporal_rng = root.stream(&format!("init/layer.{index}.temporal"));
    let temporal = TemporalMechanism::build(spec.variant, spec.order, spec.hidden_dim, &mut temporal_rng)?;
    let norm = if spec.batchnorm {
        Some(FeatureNorm::new(spec.hidden_dim)?)
    } else {
        None
    };
    let hist_mixer = match spec.mixer_input {
        Some(width) => {
            let mut mixer_rng = root.stream(&format!("init/layer.{index}.hist_mixer"));
            Some(Affine::new(width, spec.hidden_dim, &mut mixer_rng)?)
        }
        None => None,
    };
    Ok(TdeLayer {
        spatial,
        temporal,
        norm,
        hist_mixer,
    })
}

/// Dropout stream factory: one root seed, a distinct stream per site and
/// training pass, so masks are reproducible and never shared between sites.
pub struct DropoutRng {
    root: RootRng,
    pass: u64,
}

impl DropoutRng {
    pub fn new(root: RootRng) -> DropoutRng {
        DropoutRng { root, pass: 0 }
    }

    fn begin_pass(&mut self, training: bool) -> u64 {
        if training {
            self.pass += 1;
        }
        self.pass
    }

    fn stream(&self, pass: u64, site: &str) -> RngStream {
        self.root.stream(&format!("dropout/{pass}/{site}"))
    }
}

// ---------------------------------------------------------------------------
// Stationary model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub layers: usize,
    pub order: usize,
    pub step_size: f64,
    pub variant: TemporalVariant,
    pub dropout_input_output: f64,
    pub dropout_hidden: f64,
    pub batchnorm: bool,
}

impl StationaryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.output_dim == 0 {
            return Err(Error::config("dims", "dimensions must be >= 1"));
        }
        if self.order == 0 {
            return Err(Error::config("order", "order must be >= 1"));
        }
        if self.order > self.layers + 1 {
            return Err(Error::config(
                "order",
                format!(
                    "order {} exceeds layers + 1 = {}: deeper history is never produced",
                    self.order,
                    self.layers + 1
                ),
            ));
        }
        validate_dropouts(self.dropout_input_output, self.dropout_hidden)?;
        validate_model_step(self.step_size)
    }
}

fn validate_dropouts(inout: f64, hidden: f64) -> Result<()> {
    for (name, p) in [("dropout_input_output", inout), ("dropout_hidden", hidden)] {
        if !(0.0..=0.9).contains(&p) {
            return Err(Error::config(name, format!("must lie in [0, 0.9], got {p}")));
        }
    }
    Ok(())
}

fn validate_model_step(step: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&step) {
        return Err(Error::config(
            "step_size",
            format!("must lie in [0, 1], got {step}"),
        ));
    }
    Ok(())
}

/// Node classifier: `o` input embeddings, `L` layers, affine readout.
pub struct StationaryModel {
    config: StationaryConfig,
    embeddings: Vec<Affine>,
    layers: Vec<TdeLayer>,
    readout: Affine,
}

impl StationaryModel {
    pub fn new(config: StationaryConfig, root: &RootRng) -> Result<StationaryModel> {
        config.validate()?;
        let embeddings = (0..config.order)
            .map(|i| {
                let mut rng = root.stream(&format!("init/embed.{i}"));
                Affine::new(config.input_dim, config.hidden_dim, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let layers = (0..config.layers)
            .map(|l| {
                build_layer(
                    &LayerSpec {
                        variant: &config.variant,
                        hidden_dim: config.hidden_dim,
                        order: config.order,
                        step_size: config.step_size,
                        batchnorm: config.batchnorm,
                        mixer_input: None,
                    },
                    l,
                    root,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rng = root.stream("init/readout");
        let readout = Affine::new(config.hidden_dim, config.output_dim, &mut rng)?;
        Ok(StationaryModel {
            config,
            embeddings,
            layers,
            readout,
        })
    }

    pub fn config(&self) -> &StationaryConfig {
        &self.config
    }

    pub fn embeddings(&self) -> &[Affine] {
        &self.embeddings
    }

    pub fn readout(&self) -> &Affine {
        &self.readout
    }

    /// Embed one input state into the `o` initial conditions; the newest
    /// entry comes from the last embedding. The buffer is warm immediately.
    pub fn init_states(&self, tape: &mut Tape, input: &Tensor) -> Result<HistoryBuffer> {
        let mut buffer = HistoryBuffer::new(self.config.order)?;
        for embed in &self.embeddings {
            buffer.push(embed.apply(tape, input)?)?;
        }
        Ok(buffer)
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        laplacian: &Arc<SparseOperator>,
        input: &Tensor,
        training: bool,
        rng: &mut DropoutRng,
    ) -> Result<Tensor> {
        let (_, k_in) = input.dims2()?;
        if k_in != self.config.input_dim {
            return Err(Error::Shape {
                op: "forward",
                lhs: input.shape().to_vec(),
                rhs: vec![self.config.input_dim],
            });
        }
        let pass = rng.begin_pass(training);
        let p_io = self.config.dropout_input_output;
        let p_hidden = self.config.dropout_hidden;

        let input = tape.dropout(input, p_io, training, &mut rng.stream(pass, "input"))?;
        let mut history = self.init_states(tape, &input)?;

        for (l, layer) in self.layers.iter().enumerate() {
            let newest = history.newest().expect("warm buffer").clone();
            let dropped = tape.dropout(
                &newest,
                p_hidden,
                training,
                &mut rng.stream(pass, &format!("layer{l}")),
            )?;
            history.replace_newest(dropped)?;

            let coeffs = layer.temporal.coefficients(tape, &history)?;
            let current = history.newest().expect("warm buffer").clone();
            let spatial = layer.spatial_out(tape, laplacian, &current)?;
            let next = tde_step(tape, &history, &coeffs, &spatial, self.config.step_size)?;
            history.push(next)?;
        }

        let last = history.newest().expect("warm buffer").clone();
        let out = tape.dropout(&last, p_io, training, &mut rng.stream(pass, "output"))?;
        self.readout.apply(tape, &out)
    }

    pub fn named_parameters(&self) -> Vec<(String, Tensor, ParamGroup)> {
        let mut params = Vec::new();
        for (i, embed) in self.embeddings.iter().enumerate() {
            params.push((
                format!("embed.{i}.weight"),
                embed.weight.clone(),
                ParamGroup::Embedding,
            ));
            params.push((
                format!("embed.{i}.bias"),
                embed.bias.clone(),
                ParamGroup::Embedding,
            ));
        }
        collect_layer_parameters(&self.layers, &mut params);
        params.push((
            "readout.weight".into(),
            self.readout.weight.clone(),
            ParamGroup::Embedding,
        ));
        params.push((
            "readout.bias".into(),
            self.readout.bias.clone(),
            ParamGroup::Embedding,
        ));
        params
    }

    /// Per-layer stencils for data-independent mechanisms (direct / frozen).
    pub fn static_coefficients(&self) -> Option<Vec<Vec<f64>>> {
        self.layers
            .iter()
            .map(|l| l.temporal.static_coefficients())
            .collect()
    }

    /// Coefficients each layer produces for one probe input; needed for the
    /// attention variant, whose stencil is data-dependent.
    pub fn probe_coefficients(
        &self,
        laplacian: &Arc<SparseOperator>,
        input: &Tensor,
    ) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let mut history = self.init_states(&mut tape, input)?;
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let coeffs = layer.temporal.coefficients(&mut tape, &history)?;
            out.push(coeffs.values());
            let current = history.newest().expect("warm buffer").clone();
            let spatial = layer.spatial_out(&mut tape, laplacian, &current)?;
            let next = tde_step(&mut tape, &history, &coeffs, &spatial, self.config.step_size)?;
            history.push(next)?;
        }
        Ok(out)
    }

    pub fn save_checkpoint(&self) -> Result<Vec<u8>> {
        write_checkpoint(
            &CheckpointConfig::Stationary(self.config.clone()),
            &self.named_parameters(),
        )
    }
}

// ---------------------------------------------------------------------------
// Temporal (forecasting) model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub frames: usize,
    pub horizon: usize,
    pub layers: usize,
    pub order: usize,
    pub step_size: f64,
    pub variant: TemporalVariant,
    pub dropout_input_output: f64,
    pub dropout_hidden: f64,
    pub batchnorm: bool,
}

impl TemporalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::config("dims", "dimensions must be >= 1"));
        }
        if self.frames == 0 || self.horizon == 0 {
            return Err(Error::config("frames/horizon", "must be >= 1"));
        }
        if self.order == 0 {
            return Err(Error::config("order", "order must be >= 1"));
        }
        if self.order > self.frames {
            return Err(Error::config(
                "order",
                format!(
                    "order {} exceeds the {} observed frames that seed the history",
                    self.order, self.frames
                ),
            ));
        }
        validate_dropouts(self.dropout_input_output, self.dropout_hidden)?;
        validate_model_step(self.step_size)
    }

    fn time_width(&self) -> usize {
        self.frames * TIME_EMBED_WIDTH
    }
}

/// Forecaster with parallel state and history streams. The state history is
/// seeded by embedding each of the `o` newest observed frames; the history
/// stream embeds the full frame stack and is re-mixed every layer.
pub struct TemporalModel {
    config: TemporalConfig,
    time_embed: Affine,
    state_embed: Affine,
    hist_embed: Affine,
    layers: Vec<TdeLayer>,
    readout: Affine,
}

impl TemporalModel {
    pub fn new(config: TemporalConfig, root: &RootRng) -> Result<TemporalModel> {
        config.validate()?;
        let tw = config.time_width();
        let time_embed = Affine::new(tw, tw, &mut root.stream("init/time_embed"))?;
        let state_embed = Affine::new(
            config.input_dim + tw,
            config.hidden_dim,
            &mut root.stream("init/state_embed"),
        )?;
        let hist_embed = Affine::new(
            config.frames * config.input_dim + tw,
            config.hidden_dim,
            &mut root.stream("init/hist_embed"),
        )?;
        let layers = (0..config.layers)
            .map(|l| {
                build_layer(
                    &LayerSpec {
                        variant: &config.variant,
                        hidden_dim: config.hidden_dim,
                        order: config.order,
                        step_size: config.step_size,
                        batchnorm: config.batchnorm,
                        mixer_input: Some(2 * config.hidden_dim + tw),
                    },
                    l,
                    root,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let readout = Affine::new(
            config.hidden_dim,
            config.horizon * config.input_dim,
            &mut root.stream("init/readout"),
        )?;
        Ok(TemporalModel {
            config,
            time_embed,
            state_embed,
            hist_embed,
            layers,
            readout,
        })
    }

    pub fn config(&self) -> &TemporalConfig {
        &self.config
    }

    /// Embed the observed frames: returns the warm state history (one entry
    /// per of the `o` newest frames, newest first) and the projected time
    /// embedding shared by every stage.
    fn seed_streams(
        &self,
        tape: &mut Tape,
        frames: &Tensor,
        times: &[f64],
    ) -> Result<(HistoryBuffer, Tensor)> {
        let cfg = &self.config;
        let (n, _) = frames.dims2()?;
        let time_raw = time_embedding(times, n);
        let time_emb = self.time_embed.apply(tape, &time_raw)?;
        let mut history = HistoryBuffer::new(cfg.order)?;
        for j in (cfg.frames - cfg.order)..cfg.frames {
            let frame = tape.col_slice(frames, j * cfg.input_dim, cfg.input_dim)?;
            let with_time = tape.concat_cols(&[frame, time_emb.clone()])?;
            history.push(self.state_embed.apply(tape, &with_time)?)?;
        }
        Ok((history, time_emb))
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        laplacian: &Arc<SparseOperator>,
        frames: &Tensor,
        times: &[f64],
        training: bool,
        rng: &mut DropoutRng,
    ) -> Result<Tensor> {
        let cfg = &self.config;
        let (_, width) = frames.dims2()?;
        if width != cfg.frames * cfg.input_dim || times.len() != cfg.frames {
            return Err(Error::Shape {
                op: "forward",
                lhs: frames.shape().to_vec(),
                rhs: vec![cfg.frames * cfg.input_dim],
            });
        }
        let pass = rng.begin_pass(training);
        let p_io = cfg.dropout_input_output;
        let p_hidden = cfg.dropout_hidden;

        let frames = tape.dropout(frames, p_io, training, &mut rng.stream(pass, "input"))?;
        let (mut history, time_emb) = self.seed_streams(tape, &frames, times)?;

        let hist_input = tape.concat_cols(&[frames.clone(), time_emb.clone()])?;
        let mut hist_stream = self.hist_embed.apply(tape, &hist_input)?;

        for (l, layer) in self.layers.iter().enumerate() {
            let newest = history.newest().expect("warm buffer").clone();
            let dropped = tape.dropout(
                &newest,
                p_hidden,
                training,
                &mut rng.stream(pass, &format!("layer{l}")),
            )?;
            history.replace_newest(dropped)?;

            let coeffs = layer.temporal.coefficients(tape, &history)?;
            let current = history.newest().expect("warm buffer").clone();
            let spatial = layer.spatial_out(tape, laplacian, &current)?;
            let next = tde_step(tape, &history, &coeffs, &spatial, cfg.step_size)?;
            history.push(next.clone())?;

            let mixer = layer.hist_mixer.as_ref().expect("temporal layer has a mixer");
            let mixed = tape.concat_cols(&[hist_stream, next, time_emb.clone()])?;
            hist_stream = mixer.apply(tape, &mixed)?;
        }

        let last = history.newest().expect("warm buffer").clone();
        let out = tape.dropout(&last, p_io, training, &mut rng.stream(pass, "output"))?;
        self.readout.apply(tape, &out)
    }

    pub fn named_parameters(&self) -> Vec<(String, Tensor, ParamGroup)> {
        let mut params = Vec::new();
        for (name, affine) in [
            ("time_embed", &self.time_embed),
            ("state_embed", &self.state_embed),
            ("hist_embed", &self.hist_embed),
        ] {
            params.push((
                format!("{name}.weight"),
                affine.weight.clone(),
                ParamGroup::Embedding,
            ));
            params.push((
                format!("{name}.bias"),
                affine.bias.clone(),
                ParamGroup::Embedding,
            ));
        }
        collect_layer_parameters(&self.layers, &mut params);
        params.push((
            "readout.weight".into(),
            self.readout.weight.clone(),
            ParamGroup::Embedding,
        ));
        params.push((
            "readout.bias".into(),
            self.readout.bias.clone(),
            ParamGroup::Embedding,
        ));
        params
    }

    pub fn static_coefficients(&self) -> Option<Vec<Vec<f64>>> {
        self.layers
            .iter()
            .map(|l| l.temporal.static_coefficients())
            .collect()
    }

    /// Coefficients each layer produces for one probe window; needed for the
    /// attention variant, whose stencil is data-dependent.
    pub fn probe_coefficients(
        &self,
        laplacian: &Arc<SparseOperator>,
        frames: &Tensor,
        times: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        let cfg = &self.config;
        let mut tape = Tape::new();
        let (mut history, _) = self.seed_streams(&mut tape, frames, times)?;
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let coeffs = layer.temporal.coefficients(&mut tape, &history)?;
            out.push(coeffs.values());
            let current = history.newest().expect("warm buffer").clone();
            let spatial = layer.spatial_out(&mut tape, laplacian, &current)?;
            let next = tde_step(&mut tape, &history, &coeffs, &spatial, cfg.step_size)?;
            history.push(next)?;
        }
        Ok(out)
    }

    pub fn save_checkpoint(&self) -> Result<Vec<u8>> {
        write_checkpoint(
            &CheckpointConfig::Temporal(self.config.clone()),
            &self.named_parameters(),
        )
    }
}

fn collect_layer_parameters(layers: &[TdeLayer], params: &mut Vec<(String, Tensor, ParamGroup)>) {
    for (l, layer) in layers.iter().enumerate() {
        params.push((
            format!("layer.{l}.spatial.weight"),
            layer.spatial.weight().clone(),
            ParamGroup::Spatial,
        ));
        if let Some(norm) = &layer.norm {
            params.push((
                format!("layer.{l}.norm.gamma"),
                norm.gamma.clone(),
                ParamGroup::Spatial,
            ));
            params.push((
                format!("layer.{l}.norm.beta"),
                norm.beta.clone(),
                ParamGroup::Spatial,
            ));
        }
        match &layer.temporal {
            TemporalMechanism::Direct(direct) => {
                params.push((
                    format!("layer.{l}.temporal.raw"),
                    direct.raw().clone(),
                    ParamGroup::Temporal,
                ));
            }
            TemporalMechanism::Attention(attn) => {
                let heads = attn.heads();
                for (h, t) in attn.parameters().into_iter().enumerate() {
                    let name = if h < heads {
                        format!("layer.{l}.temporal.query.{h}")
                    } else {
                        format!("layer.{l}.temporal.key.{}", h - heads)
                    };
                    params.push((name, t, ParamGroup::Temporal));
                }
            }
            TemporalMechanism::Frozen(_) => {}
        }
        if let Some(mixer) = &layer.hist_mixer {
            params.push((
                format!("layer.{l}.hist_mixer.weight"),
                mixer.weight.clone(),
                ParamGroup::Embedding,
            ));
            params.push((
                format!("layer.{l}.hist_mixer.bias"),
                mixer.bias.clone(),
                ParamGroup::Embedding,
            ));
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoint format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckpointConfig {
    Stationary(StationaryConfig),
    Temporal(TemporalConfig),
}

pub enum LoadedModel {
    Stationary(StationaryModel),
    Temporal(TemporalModel),
}

fn write_checkpoint(
    config: &CheckpointConfig,
    params: &[(String, Tensor, ParamGroup)],
) -> Result<Vec<u8>> {
    let config_json = serde_json::to_vec(config)
        .map_err(|e| Error::Checkpoint(format!("config serialization failed: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&config_json);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for (name, tensor, _) in params {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(tensor.shape().len() as u8);
        for dim in tensor.shape() {
            out.extend_from_slice(&(*dim as u64).to_le_bytes());
        }
        for v in tensor.data().iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct ByteReader<'a> {
    bytes: &'a [u8],
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Checkpoint(format!(
                "truncated stream: needed {n} more bytes, have {}",
                self.bytes.len()
            )));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

/// Parse a checkpoint stream and rebuild the model it describes. The round
/// trip `save -> load -> save` is byte-identical.
pub fn load_checkpoint(bytes: &[u8]) -> Result<LoadedModel> {
    let mut r = ByteReader { bytes };
    let magic = r.take(4)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {magic:?}, expected {CHECKPOINT_MAGIC:?}"
        )));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let config_len = r.u64()? as usize;
    let config_bytes = r.take(config_len)?;
    let config: CheckpointConfig = serde_json::from_slice(config_bytes)
        .map_err(|e| Error::Checkpoint(format!("config block: {e}")))?;

    let dummy = RootRng::new(0);
    let (model, expected) = match &config {
        CheckpointConfig::Stationary(cfg) => {
            let model = StationaryModel::new(cfg.clone(), &dummy)?;
            let params = model.named_parameters();
            (LoadedModel::Stationary(model), params)
        }
        CheckpointConfig::Temporal(cfg) => {
            let model = TemporalModel::new(cfg.clone(), &dummy)?;
            let params = model.named_parameters();
            (LoadedModel::Temporal(model), params)
        }
    };

    let by_name: HashMap<&str, &Tensor> =
        expected.iter().map(|(n, t, _)| (n.as_str(), t)).collect();
    let count = r.u64()? as usize;
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "parameter count {count} disagrees with config ({} expected)",
            expected.len()
        )));
    }
    let mut seen = HashSet::new();
    for _ in 0..count {
        let name_len = r.u64()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| Error::Checkpoint(format!("parameter name not UTF-8: {e}")))?
            .to_string();
        let ndim = r.u8()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.u64()? as usize);
        }
        let tensor = by_name
            .get(name.as_str())
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter '{name}'")))?;
        if tensor.shape() != dims.as_slice() {
            return Err(Error::Checkpoint(format!(
                "parameter '{name}' has shape {dims:?}, config demands {:?}",
                tensor.shape()
            )));
        }
        let numel: usize = dims.iter().product();
        let raw = r.take(numel * 8)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensor.set_data(&values);
        if !seen.insert(name.clone()) {
            return Err(Error::Checkpoint(format!("duplicate parameter '{name}'")));
        }
    }
    if !r.bytes.is_empty() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after the last parameter",
            r.bytes.len()
        )));
    }
    Ok(model)
}

/// Read and parse a checkpoint from disk.
pub fn read_checkpoint_file(path: &std::path::Path) -> Result<LoadedModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    load_checkpoint(&bytes)
}
