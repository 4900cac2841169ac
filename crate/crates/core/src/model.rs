//! The wired attention architecture and its behavioral loop.
//!
//! Two pathways share the V4 feature maps. The feature pathway (PF, IT,
//! move/switch) decides whether the attended stimulus is the target; the
//! spatial pathway (saliency, focus, wm, anticipation) selects, memorizes
//! and remaps locations.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    decode_peak, find_bubbles, Bubble, DogParams, FieldMap, Grid, LateralKernel, StepParams,
};
use crate::network::{remap_correlate, MapId, Network, Projection, Reduction, UnitId};
use crate::scenario::{
    apply_saccade, distance, render_channels, Color, FeatureChannel, Gaze, Orientation, World,
};

/// Focus bubbles within this many cells of the peak belong to one location,
/// such as the fragments left when memory inhibition hollows a bubble.
pub const TIE_RADIUS: f64 = 2.0;

/// The task: one color and one orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TargetRepr", into = "TargetRepr")]
pub struct TargetSpec {
    pub color: Color,
    pub orientation: Orientation,
}

#[derive(Serialize, Deserialize)]
struct TargetRepr {
    relevant: Vec<FeatureChannel>,
}

impl TryFrom<TargetRepr> for TargetSpec {
    type Error = String;

    fn try_from(r: TargetRepr) -> std::result::Result<Self, String> {
        TargetSpec::from_channels(&r.relevant).map_err(|e| e.to_string())
    }
}

impl From<TargetSpec> for TargetRepr {
    fn from(t: TargetSpec) -> Self {
        TargetRepr {
            relevant: t.relevant().to_vec(),
        }
    }
}

impl TargetSpec {
    pub fn new(color: Color, orientation: Orientation) -> Self {
        TargetSpec { color, orientation }
    }

    /// Builds from a channel set; exactly one color and one orientation.
    pub fn from_channels(channels: &[FeatureChannel]) -> Result<Self> {
        let mut color = None;
        let mut orientation = None;
        for &c in channels {
            let slot_taken = match c {
                FeatureChannel::Blue => color.replace(Color::Blue).is_some(),
                FeatureChannel::Green => color.replace(Color::Green).is_some(),
                FeatureChannel::Deg45 => orientation.replace(Orientation::Deg45).is_some(),
                FeatureChannel::Deg135 => orientation.replace(Orientation::Deg135).is_some(),
            };
            if slot_taken {
                return Err(Error::config(
                    "target.relevant",
                    "needs exactly one color and one orientation",
                ));
            }
        }
        match (color, orientation) {
            (Some(color), Some(orientation)) => Ok(TargetSpec { color, orientation }),
            _ => Err(Error::config(
                "target.relevant",
                "needs exactly one color and one orientation",
            )),
        }
    }

    pub fn relevant(&self) -> [FeatureChannel; 2] {
        [self.color.into(), self.orientation.into()]
    }

    pub fn is_relevant(&self, f: FeatureChannel) -> bool {
        self.relevant().contains(&f)
    }

    pub fn matches(&self, color: Color, orientation: Orientation) -> bool {
        self.color == color && self.orientation == orientation
    }
}

/// Time constants, in the same units as `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Taus {
    pub input: f64,
    pub v4: f64,
    pub saliency: f64,
    pub focus: f64,
    pub wm: f64,
    pub anticipation: f64,
    pub pf: f64,
    pub it: f64,
    pub decision: f64,
}

impl Default for Taus {
    fn default() -> Self {
        Taus {
            input: 2.0,
            v4: 4.0,
            saliency: 4.0,
            focus: 10.0,
            wm: 10.0,
            anticipation: 10.0,
            pf: 10.0,
            it: 4.0,
            decision: 4.0,
        }
    }
}

impl Taus {
    fn all(&self) -> [(&'static str, f64); 9] {
        [
            ("tau.input", self.input),
            ("tau.v4", self.v4),
            ("tau.saliency", self.saliency),
            ("tau.focus", self.focus),
            ("tau.wm", self.wm),
            ("tau.anticipation", self.anticipation),
            ("tau.pf", self.pf),
            ("tau.it", self.it),
            ("tau.decision", self.decision),
        ]
    }
}

/// Every tunable of the architecture. Omitted fields in a config file take
/// these defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub grid: Grid,
    pub dt: f64,
    pub tau: Taus,
    pub focus_kernel: DogParams,
    pub wm_kernel: DogParams,
    /// Width of the rendered stimulus blobs, in cells.
    pub sigma_stim: f64,
    pub g_input_v4: f64,
    /// Feature bias: PF-gated copy of the input into V4.
    pub g_pf_v4: f64,
    /// Spatial bias: focus-gated copy of the input into V4.
    pub g_focus_v4: f64,
    pub g_v4_sal: f64,
    pub g_sal_focus: f64,
    pub g_focus_wm: f64,
    /// Resting level of the focus map (constant input, usually negative).
    pub h_focus: f64,
    /// Resting level of the working memory.
    pub h_wm: f64,
    /// Strength of the switch-gated wm → focus inhibition (applied with a
    /// negative sign).
    pub g_wm_switch_inhibit: f64,
    pub g_it_readout: f64,
    /// V4 level subtracted before the IT readout gain.
    pub it_offset: f64,
    pub g_move: f64,
    pub g_switch: f64,
    /// Cross-penalty in the move/switch drive.
    pub lambda: f64,
    /// Gain of the continuously displayed anticipation map.
    pub g_anticipation: f64,
    /// Gain of the post-saccadic memory drive `anticipation × saliency`.
    pub g_remap: f64,
    pub theta_move: f64,
    pub theta_switch: f64,
    pub theta_bubble: f64,
    pub hold_steps: usize,
    pub refractory_steps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            grid: Grid::default(),
            dt: 1.0,
            tau: Taus::default(),
            focus_kernel: DogParams {
                a_exc: 0.8,
                sigma_exc: 1.5,
                a_inh: 0.45,
                sigma_inh: 40.0,
                radius: Some(40),
            },
            wm_kernel: DogParams {
                a_exc: 1.5,
                sigma_exc: 0.5,
                a_inh: 0.05,
                sigma_inh: 1.0,
                radius: None,
            },
            sigma_stim: 1.5,
            g_input_v4: 0.4,
            g_pf_v4: 0.1,
            g_focus_v4: 0.4,
            g_v4_sal: 0.6,
            g_sal_focus: 1.0,
            g_focus_wm: 0.6,
            h_focus: -0.15,
            h_wm: -0.3,
            g_wm_switch_inhibit: 20.0,
            g_it_readout: 4.0,
            it_offset: 0.55,
            g_move: 1.0,
            g_switch: 0.6,
            lambda: 0.5,
            g_anticipation: 0.05,
            g_remap: 2.0,
            theta_move: 0.5,
            theta_switch: 0.5,
            theta_bubble: 0.5,
            hold_steps: 10,
            refractory_steps: 30,
        }
    }
}

impl ModelConfig {
    pub fn step_params(&self) -> StepParams {
        StepParams { dt: self.dt }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.width == 0 || self.grid.height == 0 {
            return Err(Error::config("model.grid", "width and height must be >= 1"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config("model.dt", "must be a positive number"));
        }
        for (name, tau) in self.tau.all() {
            if !(tau > 0.0) || !tau.is_finite() {
                return Err(Error::config(format!("model.{name}"), "must be positive"));
            }
            let rate = self.dt / tau;
            if rate >= 1.0 {
                return Err(Error::config(
                    format!("model.{name}"),
                    format!("stability bound violated: dt/tau = {rate} must be < 1"),
                ));
            }
        }
        let gains = [
            ("sigma_stim", self.sigma_stim),
            ("g_input_v4", self.g_input_v4),
            ("g_pf_v4", self.g_pf_v4),
            ("g_focus_v4", self.g_focus_v4),
            ("g_v4_sal", self.g_v4_sal),
            ("g_sal_focus", self.g_sal_focus),
            ("g_focus_wm", self.g_focus_wm),
            ("h_focus", self.h_focus),
            ("h_wm", self.h_wm),
            ("g_wm_switch_inhibit", self.g_wm_switch_inhibit),
            ("g_it_readout", self.g_it_readout),
            ("it_offset", self.it_offset),
            ("g_move", self.g_move),
            ("g_switch", self.g_switch),
            ("lambda", self.lambda),
            ("g_anticipation", self.g_anticipation),
            ("g_remap", self.g_remap),
        ];
        for (name, g) in gains {
            if !g.is_finite() {
                return Err(Error::config(format!("model.{name}"), "must be finite"));
            }
        }
        if !(self.sigma_stim > 0.0) {
            return Err(Error::config("model.sigma_stim", "must be positive"));
        }
        for (name, t) in [
            ("theta_move", self.theta_move),
            ("theta_switch", self.theta_switch),
            ("theta_bubble", self.theta_bubble),
        ] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::config(format!("model.{name}"), "must lie in (0, 1)"));
            }
        }
        if self.hold_steps < 1 {
            return Err(Error::config("model.hold_steps", "must be >= 1"));
        }
        for (name, k) in [
            ("focus_kernel", &self.focus_kernel),
            ("wm_kernel", &self.wm_kernel),
        ] {
            k.build()
                .map_err(|e| Error::config(format!("model.{name}"), e.to_string()))?;
        }
        Ok(())
    }
}

/// Feed-forward drive of the decision units from the IT activities.
///
/// `match` is the weakest relevant IT response, `mismatch` the strongest
/// irrelevant one. Returns `(move_input, switch_input)`, both floored at 0.
pub fn move_switch_drive(it: [f64; 4], target: TargetSpec, lambda: f64) -> (f64, f64) {
    let mut matched = f64::INFINITY;
    let mut mismatch = 0.0_f64;
    for f in FeatureChannel::ALL {
        let v = it[f.index()];
        if target.is_relevant(f) {
            matched = matched.min(v);
        } else {
            mismatch = mismatch.max(v);
        }
    }
    let move_input = (matched - lambda * mismatch).max(0.0);
    let switch_input = (mismatch + (1.0 - matched) - lambda * matched).max(0.0);
    (move_input, switch_input)
}

/// Stable handles into the wired network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Handles {
    pub input: [MapId; 4],
    pub v4: [MapId; 4],
    pub pf: [UnitId; 4],
    pub it: [UnitId; 4],
    pub saliency: MapId,
    pub focus: MapId,
    pub wm: MapId,
    pub anticipation: MapId,
    pub move_unit: UnitId,
    pub switch_unit: UnitId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Move { location: (f64, f64) },
    Switch { location: (f64, f64) },
    Budget,
}

/// Result of one covert deployment of attention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attend {
    pub decision: Decision,
    /// Step index and retinal location at which the focus bubble emerged.
    pub attended: Option<(u64, (f64, f64))>,
    /// Step index at which the decision (or budget exhaustion) happened.
    pub step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    CovertAttend,
    Switch,
    Saccade,
    Done,
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEvent {
    pub step: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retinal: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<[f64; 2]>,
    pub move_activity: f64,
    pub switch_activity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    #[serde(default)]
    pub events: Vec<ScanEvent>,
    /// Gaze at the end of the trial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_gaze: Option<[f64; 2]>,
}

impl TrialLog {
    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &ScanEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn last_kind(&self) -> Option<EventKind> {
        self.events.last().map(|e| e.kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub max_attends: usize,
    pub max_steps: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_attends: 12,
            max_steps: 4000,
        }
    }
}

/// Called after every simulation step; `Break` halts the trial.
pub trait Observer {
    fn on_step(&mut self, model: &AttentionModel) -> ControlFlow<()>;
}

impl<F: FnMut(&AttentionModel) -> ControlFlow<()>> Observer for F {
    fn on_step(&mut self, model: &AttentionModel) -> ControlFlow<()> {
        self(model)
    }
}

struct Silent;

impl Observer for Silent {
    fn on_step(&mut self, _: &AttentionModel) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

/// Internal control flow: either an error or an observer-requested halt.
enum Halt {
    Observer,
    Failed(Error),
}

impl From<Error> for Halt {
    fn from(e: Error) -> Self {
        Halt::Failed(e)
    }
}

type Flow<T> = std::result::Result<T, Halt>;

fn unhalted<T>(r: Flow<T>) -> Result<T> {
    match r {
        Ok(v) => Ok(v),
        Err(Halt::Failed(e)) => Err(e),
        Err(Halt::Observer) => unreachable!("silent observer never halts"),
    }
}

#[derive(Debug, Clone)]
pub struct AttentionModel {
    network: Network,
    handles: Handles,
    target: TargetSpec,
    config: ModelConfig,
    steps: u64,
}

/// Wires the full architecture. All maps start at zero; PF units hold the
/// target's feature template.
pub fn build_model(config: ModelConfig, target: TargetSpec) -> Result<AttentionModel> {
    config.validate()?;
    let grid = config.grid;
    let tau = config.tau;
    let mut net = Network::new();

    let mut input = Vec::new();
    let mut v4 = Vec::new();
    let mut pf = Vec::new();
    let mut it = Vec::new();
    for f in FeatureChannel::ALL {
        input.push(net.add_map(
            &format!("input_{f}"),
            grid,
            tau.input,
            LateralKernel::zero(),
        )?);
    }
    for f in FeatureChannel::ALL {
        v4.push(net.add_map(&format!("v4_{f}"), grid, tau.v4, LateralKernel::zero())?);
    }
    let saliency = net.add_map("saliency", grid, tau.saliency, LateralKernel::zero())?;
    let focus = net.add_map("focus", grid, tau.focus, config.focus_kernel.build()?)?;
    let wm = net.add_map("wm", grid, tau.wm, config.wm_kernel.build()?)?;
    let anticipation = net.add_map(
        "anticipation",
        grid,
        tau.anticipation,
        LateralKernel::zero(),
    )?;
    for f in FeatureChannel::ALL {
        pf.push(net.add_unit(&format!("pf_{f}"), tau.pf)?);
    }
    for f in FeatureChannel::ALL {
        it.push(net.add_unit(&format!("it_{f}"), tau.it)?);
    }
    let move_unit = net.add_unit("move", tau.decision)?;
    let switch_unit = net.add_unit("switch", tau.decision)?;
    // The switch order is the switch unit's supra-threshold activity.
    net.set_unit_output_threshold(switch_unit, Some(config.theta_switch))?;

    let handles = Handles {
        input: input.try_into().expect("four channels"),
        v4: v4.try_into().expect("four channels"),
        pf: pf.try_into().expect("four channels"),
        it: it.try_into().expect("four channels"),
        saliency,
        focus,
        wm,
        anticipation,
        move_unit,
        switch_unit,
    };

    for f in FeatureChannel::ALL {
        let i = f.index();
        let (src, dst) = (handles.input[i], handles.v4[i]);
        net.connect(Projection::Afferent {
            source: src.into(),
            target: dst.into(),
            weight: config.g_input_v4,
            spread: None,
        })?;
        net.connect(Projection::Gated {
            source: src.into(),
            modulator: handles.pf[i].into(),
            target: dst.into(),
            weight: config.g_pf_v4,
        })?;
        net.connect(Projection::Gated {
            source: src.into(),
            modulator: focus.into(),
            target: dst.into(),
            weight: config.g_focus_v4,
        })?;
    }
    for f in FeatureChannel::ALL {
        net.connect(Projection::Afferent {
            source: handles.v4[f.index()].into(),
            target: saliency.into(),
            weight: config.g_v4_sal,
            spread: None,
        })?;
    }
    net.connect(Projection::Afferent {
        source: saliency.into(),
        target: focus.into(),
        weight: config.g_sal_focus,
        spread: None,
    })?;
    net.connect(Projection::Gated {
        source: wm.into(),
        modulator: switch_unit.into(),
        target: focus.into(),
        weight: -config.g_wm_switch_inhibit,
    })?;
    net.connect(Projection::Afferent {
        source: focus.into(),
        target: wm.into(),
        weight: config.g_focus_wm,
        spread: None,
    })?;
    net.connect(Projection::Remap {
        memory: wm,
        displacement: focus,
        target: anticipation,
        weight: config.g_anticipation,
    })?;
    for f in FeatureChannel::ALL {
        net.connect(Projection::Readout {
            source: handles.v4[f.index()],
            target: handles.it[f.index()],
            reduction: Reduction::Max,
            weight: config.g_it_readout,
            offset: config.it_offset,
        })?;
    }

    // Memory acts on other maps only where a bubble has formed.
    net.set_map_output_threshold(wm, Some(config.theta_bubble))?;
    net.set_map_baseline(focus, config.h_focus)?;
    net.set_map_baseline(wm, config.h_wm)?;
    for f in FeatureChannel::ALL {
        let level = if target.is_relevant(f) { 1.0 } else { 0.0 };
        let id = handles.pf[f.index()];
        net.set_unit_external(id, level)?;
        net.set_unit_activity(id, level)?;
    }

    Ok(AttentionModel {
        network: net,
        handles,
        target,
        config,
        steps: 0,
    })
}

impl AttentionModel {
    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    pub fn handles(&self) -> &Handles {
        &self.handles
    }

    pub fn target(&self) -> TargetSpec {
        self.target
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn grid(&self) -> Grid {
        self.config.grid
    }

    /// Number of simulation steps taken so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn map(&self, id: MapId) -> &FieldMap {
        self.network.map(id)
    }

    pub fn focus(&self) -> &FieldMap {
        self.network.map(self.handles.focus)
    }

    pub fn wm(&self) -> &FieldMap {
        self.network.map(self.handles.wm)
    }

    pub fn saliency(&self) -> &FieldMap {
        self.network.map(self.handles.saliency)
    }

    pub fn v4(&self, f: FeatureChannel) -> &FieldMap {
        self.network.map(self.handles.v4[f.index()])
    }

    pub fn it_activities(&self) -> [f64; 4] {
        self.handles.it.map(|id| self.network.unit(id).activity())
    }

    pub fn pf_activities(&self) -> [f64; 4] {
        self.handles.pf.map(|id| self.network.unit(id).activity())
    }

    pub fn move_activity(&self) -> f64 {
        self.network.unit(self.handles.move_unit).activity()
    }

    pub fn switch_activity(&self) -> f64 {
        self.network.unit(self.handles.switch_unit).activity()
    }

    pub fn center(&self) -> (f64, f64) {
        let (cx, cy) = self.grid().center();
        (cx as f64, cy as f64)
    }

    /// Sets the input channels' drive from the scene seen at `gaze`.
    pub fn render(&mut self, world: &World, gaze: Gaze) -> Result<()> {
        let channels = render_channels(world, gaze, self.grid(), self.config.sigma_stim)?;
        for (id, ch) in self.handles.input.into_iter().zip(channels) {
            self.network.set_map_external(id, Some(ch))?;
        }
        Ok(())
    }

    /// Advances the whole network by one step.
    pub fn step(&mut self) -> Result<()> {
        let (m, s) = move_switch_drive(self.it_activities(), self.target, self.config.lambda);
        self.network
            .set_unit_external(self.handles.move_unit, self.config.g_move * m)?;
        self.network
            .set_unit_external(self.handles.switch_unit, self.config.g_switch * s)?;
        self.network.step(self.config.step_params())?;
        self.steps += 1;
        Ok(())
    }

    fn tick<O: Observer>(&mut self, obs: &mut O) -> Flow<()> {
        self.step()?;
        match obs.on_step(self) {
            ControlFlow::Continue(()) => Ok(()),
            ControlFlow::Break(()) => Err(Halt::Observer),
        }
    }

    pub fn run_steps(&mut self, n: usize) -> Result<()> {
        for _ in 0..n {
            self.step()?;
        }
        Ok(())
    }

    /// Steps until move or switch stays above threshold for `hold_steps`
    /// consecutive steps while focus holds one location. Bubbles more than
    /// `TIE_RADIUS` cells apart are still competing and count as none.
    pub fn attend_until_decision(
        &mut self,
        world: &World,
        gaze: Gaze,
        budget: u64,
    ) -> Result<Attend> {
        unhalted(self.attend_with(world, gaze, budget, &mut Silent))
    }

    fn attend_with<O: Observer>(
        &mut self,
        world: &World,
        gaze: Gaze,
        budget: u64,
        obs: &mut O,
    ) -> Flow<Attend> {
        self.render(world, gaze)?;
        let cfg = &self.config;
        let (theta_bubble, theta_move, theta_switch, hold) = (
            cfg.theta_bubble,
            cfg.theta_move,
            cfg.theta_switch,
            cfg.hold_steps,
        );
        let mut attended = None;
        let (mut move_run, mut switch_run) = (0usize, 0usize);
        for _ in 0..budget {
            self.tick(obs)?;
            let Some(peak) = decode_peak(self.focus(), theta_bubble).filter(|peak| {
                find_bubbles(self.focus(), theta_bubble).iter().all(|b| {
                    distance(
                        [b.location.0, b.location.1],
                        [peak.location.0, peak.location.1],
                    ) <= TIE_RADIUS
                })
            }) else {
                attended = None;
                move_run = 0;
                switch_run = 0;
                continue;
            };
            if attended.is_none() {
                attended = Some((self.steps, peak.location));
                continue;
            }
            switch_run = if self.switch_activity() > theta_switch {
                switch_run + 1
            } else {
                0
            };
            move_run = if self.move_activity() > theta_move {
                move_run + 1
            } else {
                0
            };
            let decision = if switch_run >= hold {
                Some(Decision::Switch {
                    location: peak.location,
                })
            } else if move_run >= hold {
                Some(Decision::Move {
                    location: peak.location,
                })
            } else {
                None
            };
            if let Some(decision) = decision {
                return Ok(Attend {
                    decision,
                    attended,
                    step: self.steps,
                });
            }
        }
        Ok(Attend {
            decision: Decision::Budget,
            attended,
            step: self.steps,
        })
    }

    /// Lets the switch-gated memory inhibition act for `refractory_steps`,
    /// and up to `refractory_steps` more until the released location has left
    /// the focus and saturated in memory.
    pub fn perform_switch(&mut self) -> Result<()> {
        unhalted(self.switch_with(&mut Silent))
    }

    fn switch_with<O: Observer>(&mut self, obs: &mut O) -> Flow<()> {
        let (theta, refractory) = (self.config.theta_bubble, self.config.refractory_steps);
        let released = decode_peak(self.focus(), theta).map(|b| [b.location.0, b.location.1]);
        for _ in 0..refractory {
            self.tick(obs)?;
        }
        // A slowly forming memory can leave the hollowed bubble alive past
        // the window, or release it before the memory sustains itself. Allow
        // one more window for the focus to clear and the memory to saturate.
        if let Some(released) = released {
            let near = |b: &Bubble| distance([b.location.0, b.location.1], released) <= TIE_RADIUS;
            for _ in 0..refractory {
                let lingering = find_bubbles(self.focus(), theta).iter().any(near);
                let stored = find_bubbles(self.wm(), theta)
                    .iter()
                    .any(|b| near(b) && b.amplitude >= 1.0);
                if stored && !lingering {
                    break;
                }
                self.tick(obs)?;
            }
        }
        Ok(())
    }

    /// Executes a saccade to the focus peak and rebuilds the memory in the
    /// new retinal frame from `anticipation × post-saccadic saliency`.
    pub fn perform_saccade(&mut self, world: &World, gaze: Gaze) -> Result<Gaze> {
        unhalted(self.saccade_with(world, gaze, &mut Silent))
    }

    /// The predicted post-saccadic memory: the wm output correlated with a
    /// unit point mass at the decoded focus peak, split bilinearly over the
    /// four surrounding cells.
    pub fn anticipate(&self) -> Result<Vec<f64>> {
        let theta = self.config.theta_bubble;
        let peak = decode_peak(self.focus(), theta).ok_or(Error::NoFocus(theta))?;
        let grid = self.grid();
        let (x, y) = peak.location;
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let mut point = grid.zeros();
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                if let Some(i) = grid.checked_index(x0 as i64 + dx, y0 as i64 + dy) {
                    point[i] += wx * wy;
                }
            }
        }
        let mut displacement = FieldMap::new(grid, self.config.tau.focus)?;
        displacement.set_activity(&point)?;
        let mut memory = FieldMap::new(grid, self.config.tau.wm)?;
        memory.set_activity(&self.network.map_output(self.handles.wm))?;
        remap_correlate(&memory, &displacement, grid.center())
    }

    fn saccade_with<O: Observer>(&mut self, world: &World, gaze: Gaze, obs: &mut O) -> Flow<Gaze> {
        let theta = self.config.theta_bubble;
        let peak = decode_peak(self.focus(), theta).ok_or(Error::NoFocus(theta))?;
        let (cx, cy) = self.center();
        let v = [peak.location.0 - cx, peak.location.1 - cy];
        let anticipation = self.anticipate()?;
        let new_gaze = apply_saccade(gaze, v);

        let h = self.handles;
        let channels = render_channels(world, new_gaze, self.grid(), self.config.sigma_stim)?;
        for (id, ch) in h.input.into_iter().zip(channels) {
            self.network.set_map_activity(id, &ch)?;
            self.network.set_map_external(id, Some(ch))?;
        }
        for id in
            h.v4.into_iter()
                .chain([h.saliency, h.focus, h.wm, h.anticipation])
        {
            self.network.clear_map(id);
        }

        let g = self.config.g_remap;
        for _ in 0..self.config.refractory_steps {
            let sal = self.saliency().activity();
            let peak = sal.iter().copied().fold(0.0, f64::max);
            let drive: Vec<f64> = if peak > 0.0 {
                anticipation
                    .iter()
                    .zip(sal)
                    .map(|(a, s)| g * a * s / peak)
                    .collect()
            } else {
                self.grid().zeros()
            };
            self.network.set_map_external(h.wm, Some(drive))?;
            self.tick(obs)?;
            // Attention is not redeployed while the memory is rebuilt.
            self.network.clear_map(h.focus);
        }
        self.network.set_map_external(h.wm, None)?;
        Ok(new_gaze)
    }

    fn event(
        &self,
        kind: EventKind,
        step: u64,
        retinal: Option<(f64, f64)>,
        gaze: Gaze,
    ) -> ScanEvent {
        let grid = self.grid();
        ScanEvent {
            step,
            kind,
            retinal: retinal.map(|(x, y)| [x, y]),
            world: retinal.map(|r| gaze.to_world(grid, r)),
            move_activity: self.move_activity(),
            switch_activity: self.switch_activity(),
        }
    }

    /// Covert scan until a target is recognized, then one saccade and
    /// memory update.
    pub fn run_trial(&mut self, world: &World, gaze: Gaze, limits: Limits) -> Result<TrialLog> {
        self.run_trial_observed(world, gaze, limits, &mut Silent)
    }

    /// Like [`AttentionModel::run_trial`], reporting every step to
    /// `observer`. A halt requested by the observer ends the trial early
    /// and returns the events logged so far.
    pub fn run_trial_observed<O: Observer>(
        &mut self,
        world: &World,
        gaze: Gaze,
        limits: Limits,
        observer: &mut O,
    ) -> Result<TrialLog> {
        let mut log = TrialLog::default();
        match self.trial_with(world, gaze, limits, observer, &mut log) {
            Ok(()) | Err(Halt::Observer) => Ok(log),
            Err(Halt::Failed(e)) => Err(e),
        }
    }

    fn trial_with<O: Observer>(
        &mut self,
        world: &World,
        mut gaze: Gaze,
        limits: Limits,
        obs: &mut O,
        log: &mut TrialLog,
    ) -> Flow<()> {
        let start = self.steps;
        let mut attends = 0;
        log.final_gaze = Some(gaze.center);
        loop {
            let used = self.steps - start;
            if attends >= limits.max_attends || used >= limits.max_steps {
                let peak = decode_peak(self.focus(), self.config.theta_bubble).map(|b| b.location);
                log.events
                    .push(self.event(EventKind::Budget, self.steps, peak, gaze));
                return Ok(());
            }
            let outcome = self.attend_with(world, gaze, limits.max_steps - used, obs)?;
            attends += 1;
            if let Some((step, loc)) = outcome.attended {
                if outcome.decision != Decision::Budget {
                    log.events
                        .push(self.event(EventKind::CovertAttend, step, Some(loc), gaze));
                }
            }
            match outcome.decision {
                Decision::Switch { location } => {
                    log.events.push(self.event(
                        EventKind::Switch,
                        outcome.step,
                        Some(location),
                        gaze,
                    ));
                    self.switch_with(obs)?;
                }
                Decision::Move { location } => {
                    log.events.push(self.event(
                        EventKind::Saccade,
                        outcome.step,
                        Some(location),
                        gaze,
                    ));
                    gaze = self.saccade_with(world, gaze, obs)?;
                    log.final_gaze = Some(gaze.center);
                    let on_target = world.stimuli.iter().any(|s| {
                        self.target.matches(s.color, s.orientation)
                            && distance(s.pos, gaze.center) <= 1.0
                    });
                    let kind = if on_target {
                        EventKind::Done
                    } else {
                        EventKind::Budget
                    };
                    let fovea = self.center();
                    log.events
                        .push(self.event(kind, self.steps, Some(fovea), gaze));
                    return Ok(());
                }
                Decision::Budget => {
                    let peak =
                        decode_peak(self.focus(), self.config.theta_bubble).map(|b| b.location);
                    log.events
                        .push(self.event(EventKind::Budget, self.steps, peak, gaze));
                    return Ok(());
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Stimulus;

    fn blue45() -> TargetSpec {
        TargetSpec::new(Color::Blue, Orientation::Deg45)
    }

    #[test]
    fn drive_perfect_match() {
        assert_eq!(
            move_switch_drive([1.0, 0.0, 1.0, 0.0], blue45(), 0.5),
            (1.0, 0.0)
        );
    }

    #[test]
    fn drive_perfect_mismatch() {
        assert_eq!(
            move_switch_drive([0.0, 1.0, 0.0, 1.0], blue45(), 0.5),
            (0.0, 2.0)
        );
    }

    #[test]
    fn drive_partial() {
        let (m, s) = move_switch_drive([0.8, 0.1, 0.6, 0.2], blue45(), 0.5);
        assert!((m - 0.5).abs() < 1e-12);
        assert!((s - 0.3).abs() < 1e-12);
    }

    #[test]
    fn target_spec_requires_one_of_each() {
        use FeatureChannel::*;
        assert!(TargetSpec::from_channels(&[Blue, Deg45]).is_ok());
        assert!(TargetSpec::from_channels(&[Blue, Green]).is_err());
        assert!(TargetSpec::from_channels(&[Blue]).is_err());
        assert!(TargetSpec::from_channels(&[Blue, Deg45, Deg135]).is_err());
    }

    #[test]
    fn structure_and_pf_template() {
        let m = build_model(ModelConfig::default(), blue45()).unwrap();
        assert_eq!(m.network().map_count(), 4 + 4 + 4);
        assert_eq!(m.network().unit_count(), 4 + 4 + 2);
        assert_eq!(m.pf_activities(), [1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_input_stays_zero() {
        let mut m = build_model(ModelConfig::default(), blue45()).unwrap();
        m.render(&World::new(vec![]).unwrap(), Gaze::default())
            .unwrap();
        m.run_steps(200).unwrap();
        for id in m.network().map_ids() {
            assert!(m.map(id).activity().iter().all(|&u| u == 0.0));
        }
        assert_eq!(m.pf_activities(), [1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn invalid_config_rejected() {
        let c = ModelConfig {
            dt: 15.0,
            ..ModelConfig::default()
        };
        assert!(matches!(
            build_model(c, blue45()),
            Err(Error::Config { .. })
        ));
        let c = ModelConfig {
            theta_move: 1.0,
            ..ModelConfig::default()
        };
        assert!(build_model(c, blue45()).is_err());
        let c = ModelConfig {
            g_switch: f64::NAN,
            ..ModelConfig::default()
        };
        assert!(build_model(c, blue45()).is_err());
    }

    #[test]
    fn saccade_without_focus_fails() {
        let mut m = build_model(ModelConfig::default(), blue45()).unwrap();
        let w = World::new(vec![Stimulus::new(
            0.0,
            0.0,
            Color::Blue,
            Orientation::Deg45,
        )])
        .unwrap();
        assert!(matches!(
            m.perform_saccade(&w, Gaze::default()),
            Err(Error::NoFocus(_))
        ));
    }
}
