//! Projection graph over named maps and scalar units, stepped synchronously.
//!
//! The input of every target is the sum of its incoming projections, in the
//! order they were connected, evaluated on the state at time `t`. Only after
//! all inputs are known is any state advanced to `t + dt`.

use std::borrow::Cow;
use std::fmt;

use crate::error::{Error, Result};
use crate::field::{convolve_into, FieldMap, Grid, LateralKernel, StepParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MapId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UnitId(usize);

impl MapId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl UnitId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Either end of a projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    Map(MapId),
    Unit(UnitId),
}

impl From<MapId> for Node {
    fn from(id: MapId) -> Self {
        Node::Map(id)
    }
}

impl From<UnitId> for Node {
    fn from(id: UnitId) -> Self {
        Node::Unit(id)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Map(m) => write!(f, "map#{}", m.0),
            Node::Unit(u) => write!(f, "unit#{}", u.0),
        }
    }
}

/// How a map is collapsed to a scalar for a unit readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Max,
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    /// `weight·source`. A map source is optionally convolved with `spread`;
    /// a unit source is broadcast over a map target.
    Afferent {
        source: Node,
        target: Node,
        weight: f64,
        spread: Option<LateralKernel>,
    },
    /// `weight·source·modulator`, cell-wise for a map modulator, broadcast
    /// for a unit modulator. Unit modulators contribute their thresholded
    /// output.
    Gated {
        source: Node,
        modulator: Node,
        target: Node,
        weight: f64,
    },
    /// `weight·remap_correlate(memory, displacement, center)`.
    Remap {
        memory: MapId,
        displacement: MapId,
        target: MapId,
        weight: f64,
    },
    /// `weight·(reduce(source) − offset)` into a scalar unit.
    Readout {
        source: MapId,
        target: UnitId,
        reduction: Reduction,
        weight: f64,
        offset: f64,
    },
}

impl Projection {
    pub fn target(&self) -> Node {
        match *self {
            Projection::Afferent { target, .. } | Projection::Gated { target, .. } => target,
            Projection::Remap { target, .. } => Node::Map(target),
            Projection::Readout { target, .. } => Node::Unit(target),
        }
    }
}

/// Leaky integrator with activity in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarUnit {
    name: String,
    activity: f64,
    tau: f64,
    output_threshold: Option<f64>,
    external: f64,
}

impl ScalarUnit {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn activity(&self) -> f64 {
        self.activity
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Activity as seen by gating projections: zero below the output
    /// threshold, if one is set.
    pub fn output(&self) -> f64 {
        match self.output_threshold {
            Some(t) if self.activity < t => 0.0,
            _ => self.activity,
        }
    }
}

#[derive(Debug, Clone)]
struct MapSlot {
    name: String,
    field: FieldMap,
    kernel: LateralKernel,
    external: Option<Vec<f64>>,
    baseline: f64,
    output_threshold: Option<f64>,
}

impl MapSlot {
    fn output(&self) -> Cow<'_, [f64]> {
        let u = self.field.activity();
        match self.output_threshold {
            Some(t) => Cow::Owned(u.iter().map(|&v| if v < t { 0.0 } else { v }).collect()),
            None => Cow::Borrowed(u),
        }
    }
}

/// Evaluated input of a target.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Grid(Vec<f64>),
    Scalar(f64),
}

#[derive(Debug, Clone, Default)]
pub struct Network {
    maps: Vec<MapSlot>,
    units: Vec<ScalarUnit>,
    projections: Vec<Projection>,
}

/// `A(z) = Σ_c memory(z + (c − center))·displacement(c)`, zero outside the
/// grid. A point mass at `c` shifts the memory by `−(c − center)`.
pub fn remap_correlate(
    memory: &FieldMap,
    displacement: &FieldMap,
    center: (usize, usize),
) -> Result<Vec<f64>> {
    let grid = memory.grid();
    if displacement.grid() != grid {
        return Err(Error::GridMismatch {
            expected: grid.len(),
            found: displacement.grid().len(),
        });
    }
    let mut out = grid.zeros();
    remap_into(
        grid,
        memory.activity(),
        displacement.activity(),
        center,
        1.0,
        &mut out,
    );
    Ok(out)
}

fn remap_into(
    grid: Grid,
    memory: &[f64],
    displacement: &[f64],
    center: (usize, usize),
    weight: f64,
    out: &mut [f64],
) {
    let (w, h) = (grid.width as i64, grid.height as i64);
    let (cx, cy) = (center.0 as i64, center.1 as i64);
    for (ci, &d) in displacement.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let dx = (ci as i64 % w) - cx;
        let dy = (ci as i64 / w) - cy;
        let scale = weight * d;
        // z + (dx, dy) must stay inside the grid.
        let zx0 = (-dx).max(0);
        let zx1 = (w - 1 - dx).min(w - 1);
        let zy0 = (-dy).max(0);
        let zy1 = (h - 1 - dy).min(h - 1);
        if zx0 > zx1 || zy0 > zy1 {
            continue;
        }
        let n = (zx1 - zx0 + 1) as usize;
        for zy in zy0..=zy1 {
            let src = ((zy + dy) * w + zx0 + dx) as usize;
            let dst = (zy * w + zx0) as usize;
            for (o, &m) in out[dst..dst + n].iter_mut().zip(&memory[src..src + n]) {
                *o += scale * m;
            }
        }
    }
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a zero-initialised map.
    pub fn add_map(
        &mut self,
        name: &str,
        grid: Grid,
        tau: f64,
        kernel: LateralKernel,
    ) -> Result<MapId> {
        self.check_name(name)?;
        let field = FieldMap::new(grid, tau)?;
        self.maps.push(MapSlot {
            name: name.to_string(),
            field,
            kernel,
            external: None,
            baseline: 0.0,
            output_threshold: None,
        });
        Ok(MapId(self.maps.len() - 1))
    }

    pub fn add_unit(&mut self, name: &str, tau: f64) -> Result<UnitId> {
        self.check_name(name)?;
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time constant must be positive, got {tau}"
            )));
        }
        self.units.push(ScalarUnit {
            name: name.to_string(),
            activity: 0.0,
            tau,
            output_threshold: None,
            external: 0.0,
        });
        Ok(UnitId(self.units.len() - 1))
    }

    fn check_name(&self, name: &str) -> Result<()> {
        let taken =
            self.maps.iter().any(|m| m.name == name) || self.units.iter().any(|u| u.name == name);
        if taken {
            Err(Error::DuplicateName(name.to_string()))
        } else {
            Ok(())
        }
    }

    pub fn map_count(&self) -> usize {
        self.maps.len()
    }

    pub fn unit_count(&self) -> usize {
        self.units.len()
    }

    pub fn projections(&self) -> &[Projection] {
        &self.projections
    }

    pub fn map_ids(&self) -> impl Iterator<Item = MapId> {
        (0..self.maps.len()).map(MapId)
    }

    pub fn unit_ids(&self) -> impl Iterator<Item = UnitId> {
        (0..self.units.len()).map(UnitId)
    }

    pub fn map_by_name(&self, name: &str) -> Option<MapId> {
        self.maps.iter().position(|m| m.name == name).map(MapId)
    }

    pub fn unit_by_name(&self, name: &str) -> Option<UnitId> {
        self.units.iter().position(|u| u.name == name).map(UnitId)
    }

    pub fn map_name(&self, id: MapId) -> &str {
        &self.maps[id.0].name
    }

    pub fn map(&self, id: MapId) -> &FieldMap {
        &self.maps[id.0].field
    }

    pub fn kernel(&self, id: MapId) -> &LateralKernel {
        &self.maps[id.0].kernel
    }

    pub fn unit(&self, id: UnitId) -> &ScalarUnit {
        &self.units[id.0]
    }

    pub fn set_map_activity(&mut self, id: MapId, values: &[f64]) -> Result<()> {
        self.check_node(Node::Map(id))?;
        self.maps[id.0].field.set_activity(values)
    }

    pub fn clear_map(&mut self, id: MapId) {
        self.maps[id.0].field.clear();
    }

    pub fn set_unit_activity(&mut self, id: UnitId, value: f64) -> Result<()> {
        self.check_node(Node::Unit(id))?;
        self.units[id.0].activity = value.clamp(0.0, 1.0);
        Ok(())
    }

    pub fn set_unit_output_threshold(&mut self, id: UnitId, threshold: Option<f64>) -> Result<()> {
        self.check_node(Node::Unit(id))?;
        self.units[id.0].output_threshold = threshold;
        Ok(())
    }

    /// Cells below `threshold` are read as zero by every projection leaving
    /// the map. Lateral interaction still sees the raw activity.
    pub fn set_map_output_threshold(&mut self, id: MapId, threshold: Option<f64>) -> Result<()> {
        self.check_node(Node::Map(id))?;
        self.maps[id.0].output_threshold = threshold;
        Ok(())
    }

    /// Activity of a map as seen by its outgoing projections.
    pub fn map_output(&self, id: MapId) -> Cow<'_, [f64]> {
        self.maps[id.0].output()
    }

    /// Extra input added to a map on every step, on top of its projections.
    pub fn set_map_external(&mut self, id: MapId, values: Option<Vec<f64>>) -> Result<()> {
        self.check_node(Node::Map(id))?;
        if let Some(v) = &values {
            let expected = self.maps[id.0].field.grid().len();
            if v.len() != expected {
                return Err(Error::GridMismatch {
                    expected,
                    found: v.len(),
                });
            }
        }
        self.maps[id.0].external = values;
        Ok(())
    }

    /// Constant input added to every cell of a map (a resting level).
    pub fn set_map_baseline(&mut self, id: MapId, value: f64) -> Result<()> {
        self.check_node(Node::Map(id))?;
        if !value.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite baseline {value}"
            )));
        }
        self.maps[id.0].baseline = value;
        Ok(())
    }

    pub fn set_unit_external(&mut self, id: UnitId, value: f64) -> Result<()> {
        self.check_node(Node::Unit(id))?;
        self.units[id.0].external = value;
        Ok(())
    }

    fn check_node(&self, node: Node) -> Result<()> {
        let ok = match node {
            Node::Map(m) => m.0 < self.maps.len(),
            Node::Unit(u) => u.0 < self.units.len(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::UnknownId(node.to_string()))
        }
    }

    fn same_grid(&self, a: MapId, b: MapId) -> Result<()> {
        let (ga, gb) = (self.maps[a.0].field.grid(), self.maps[b.0].field.grid());
        if ga != gb {
            return Err(Error::InvalidProjection(format!(
                "{} and {} live on different grids",
                self.maps[a.0].name, self.maps[b.0].name
            )));
        }
        Ok(())
    }

    /// Appends a projection after checking its ids and shape.
    pub fn connect(&mut self, projection: Projection) -> Result<()> {
        match &projection {
            Projection::Afferent {
                source,
                target,
                weight,
                spread,
            } => {
                self.check_node(*source)?;
                self.check_node(*target)?;
                check_weight(*weight)?;
                match (*source, *target) {
                    (Node::Map(s), Node::Map(t)) => self.same_grid(s, t)?,
                    (Node::Unit(_), Node::Map(_)) | (Node::Unit(_), Node::Unit(_)) => {
                        if spread.is_some() {
                            return Err(Error::InvalidProjection(
                                "spread requires a map source".into(),
                            ));
                        }
                    }
                    (Node::Map(_), Node::Unit(_)) => {
                        return Err(Error::InvalidProjection(
                            "map to unit projections must be readouts".into(),
                        ))
                    }
                }
            }
            Projection::Gated {
                source,
                modulator,
                target,
                weight,
            } => {
                self.check_node(*source)?;
                self.check_node(*modulator)?;
                self.check_node(*target)?;
                check_weight(*weight)?;
                match (*source, *modulator, *target) {
                    (Node::Map(s), m, Node::Map(t)) => {
                        self.same_grid(s, t)?;
                        if let Node::Map(m) = m {
                            self.same_grid(m, t)?;
                        }
                    }
                    (Node::Unit(_), Node::Unit(_), Node::Unit(_)) => {}
                    _ => {
                        return Err(Error::InvalidProjection(
                            "gated projection must be map-to-map or unit-to-unit".into(),
                        ))
                    }
                }
            }
            Projection::Remap {
                memory,
                displacement,
                target,
                weight,
            } => {
                for id in [*memory, *displacement, *target] {
                    self.check_node(Node::Map(id))?;
                }
                check_weight(*weight)?;
                self.same_grid(*memory, *target)?;
                self.same_grid(*displacement, *target)?;
            }
            Projection::Readout {
                source,
                target,
                weight,
                offset,
                ..
            } => {
                self.check_node(Node::Map(*source))?;
                self.check_node(Node::Unit(*target))?;
                check_weight(*weight)?;
                check_weight(*offset)?;
            }
        }
        self.projections.push(projection);
        Ok(())
    }

    fn source_value(&self, node: Node) -> f64 {
        match node {
            Node::Unit(u) => self.units[u.0].output(),
            Node::Map(_) => unreachable!("map sources are read cell-wise"),
        }
    }

    /// Adds the contribution of `projection` (whose target is a map) into `out`.
    fn accumulate_map(&self, projection: &Projection, out: &mut [f64], scratch: &mut Vec<f64>) {
        match projection {
            Projection::Afferent {
                source,
                weight,
                spread,
                ..
            } => match *source {
                Node::Map(s) => {
                    let slot = &self.maps[s.0];
                    let src = slot.output();
                    match spread {
                        Some(k) => {
                            let grid = slot.field.grid();
                            scratch.resize(grid.len(), 0.0);
                            convolve_into(grid, &src, k, scratch);
                            for (o, &v) in out.iter_mut().zip(scratch.iter()) {
                                *o += weight * v;
                            }
                        }
                        None => {
                            for (o, &v) in out.iter_mut().zip(src.iter()) {
                                *o += weight * v;
                            }
                        }
                    }
                }
                Node::Unit(_) => {
                    let v = weight * self.source_value(*source);
                    out.iter_mut().for_each(|o| *o += v);
                }
            },
            Projection::Gated {
                source,
                modulator,
                weight,
                ..
            } => {
                let Node::Map(s) = *source else {
                    unreachable!()
                };
                let src = self.maps[s.0].output();
                match *modulator {
                    Node::Map(m) => {
                        let md = self.maps[m.0].output();
                        for ((o, &a), &b) in out.iter_mut().zip(src.iter()).zip(md.iter()) {
                            *o += weight * a * b;
                        }
                    }
                    Node::Unit(_) => {
                        let g = weight * self.source_value(*modulator);
                        if g != 0.0 {
                            for (o, &a) in out.iter_mut().zip(src.iter()) {
                                *o += g * a;
                            }
                        }
                    }
                }
            }
            Projection::Remap {
                memory,
                displacement,
                weight,
                target,
            } => {
                let grid = self.maps[target.0].field.grid();
                remap_into(
                    grid,
                    &self.maps[memory.0].output(),
                    &self.maps[displacement.0].output(),
                    grid.center(),
                    *weight,
                    out,
                );
            }
            Projection::Readout { .. } => unreachable!("readouts target units"),
        }
    }

    fn scalar_contribution(&self, projection: &Projection) -> f64 {
        match projection {
            Projection::Afferent { source, weight, .. } => weight * self.source_value(*source),
            Projection::Gated {
                source,
                modulator,
                weight,
                ..
            } => weight * self.source_value(*source) * self.source_value(*modulator),
            Projection::Readout {
                source,
                reduction,
                weight,
                offset,
                ..
            } => {
                let u = self.maps[source.0].output();
                let r = match reduction {
                    Reduction::Max => u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Reduction::Sum => u.iter().sum(),
                    Reduction::Mean => u.iter().sum::<f64>() / u.len() as f64,
                };
                weight * (r - offset)
            }
            Projection::Remap { .. } => unreachable!("remap targets maps"),
        }
    }

    /// `I(x)` of `target` from the current state; does not modify anything.
    pub fn compute_input(&self, target: Node) -> Result<Input> {
        self.check_node(target)?;
        let mut scratch = Vec::new();
        match target {
            Node::Map(id) => {
                let slot = &self.maps[id.0];
                let mut out = slot.field.grid().zeros();
                self.map_input_into(id, &mut out, &mut scratch);
                Ok(Input::Grid(out))
            }
            Node::Unit(id) => Ok(Input::Scalar(self.unit_input(id))),
        }
    }

    fn map_input_into(&self, id: MapId, out: &mut [f64], scratch: &mut Vec<f64>) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for p in self
            .projections
            .iter()
            .filter(|p| p.target() == Node::Map(id))
        {
            self.accumulate_map(p, out, scratch);
        }
        let slot = &self.maps[id.0];
        if let Some(ext) = &slot.external {
            for (o, &e) in out.iter_mut().zip(ext) {
                *o += e;
            }
        }
        if slot.baseline != 0.0 {
            out.iter_mut().for_each(|o| *o += slot.baseline);
        }
    }

    fn unit_input(&self, id: UnitId) -> f64 {
        let mut total = 0.0;
        for p in self
            .projections
            .iter()
            .filter(|p| p.target() == Node::Unit(id))
        {
            total += self.scalar_contribution(p);
        }
        total + self.units[id.0].external
    }

    fn check_rates(&self, params: StepParams) -> Result<()> {
        let taus = self
            .maps
            .iter()
            .map(|m| m.field.tau())
            .chain(self.units.iter().map(|u| u.tau));
        for tau in taus {
            let rate = params.dt / tau;
            if !(rate > 0.0 && rate < 1.0) {
                return Err(Error::Unstable { dt: params.dt, tau });
            }
        }
        Ok(())
    }

    /// Advances every map and unit by one Euler step.
    pub fn step(&mut self, params: StepParams) -> Result<()> {
        let order: Vec<usize> = (0..self.maps.len()).collect();
        self.step_in_order(params, &order)
    }

    fn step_in_order(&mut self, params: StepParams, order: &[usize]) -> Result<()> {
        self.check_rates(params)?;
        let mut scratch = Vec::new();
        let mut map_inputs: Vec<Vec<f64>> = Vec::with_capacity(self.maps.len());
        for (i, slot) in self.maps.iter().enumerate() {
            let mut buf = slot.field.grid().zeros();
            self.map_input_into(MapId(i), &mut buf, &mut scratch);
            map_inputs.push(buf);
        }
        let unit_inputs: Vec<f64> = (0..self.units.len())
            .map(|i| self.unit_input(UnitId(i)))
            .collect();

        let mut lateral = Vec::new();
        for &i in order {
            let slot = &mut self.maps[i];
            lateral.resize(slot.field.grid().len(), 0.0);
            convolve_into(
                slot.field.grid(),
                slot.field.activity(),
                &slot.kernel,
                &mut lateral,
            );
            slot.field.advance(&lateral, &map_inputs[i], params)?;
        }
        for (unit, input) in self.units.iter_mut().zip(unit_inputs) {
            let rate = params.dt / unit.tau;
            let next = unit.activity + rate * (-unit.activity + input);
            unit.activity = if next.is_nan() {
                0.0
            } else {
                next.clamp(0.0, 1.0)
            };
        }
        Ok(())
    }
}

fn check_weight(w: f64) -> Result<()> {
    if w.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidProjection(format!("non-finite weight {w}")))
    }
}

/// Single-shot step of `network`: see [`Network::step`].
pub fn step_network(network: &mut Network, params: StepParams) -> Result<()> {
    network.step(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::make_dog_kernel;

    const P: StepParams = StepParams { dt: 0.1 };

    fn grid() -> Grid {
        Grid::new(8, 6).unwrap()
    }

    fn grid_input(net: &Network, id: MapId) -> Vec<f64> {
        match net.compute_input(Node::Map(id)).unwrap() {
            Input::Grid(v) => v,
            Input::Scalar(_) => panic!("expected grid"),
        }
    }

    #[test]
    fn new_map_is_zero_and_names_are_unique() {
        let mut net = Network::new();
        let id = net
            .add_map("focus", Grid::default(), 1.0, LateralKernel::zero())
            .unwrap();
        assert_eq!(net.map_count(), 1);
        assert!(net.map(id).activity().iter().all(|&u| u == 0.0));
        assert!(matches!(
            net.add_map("focus", Grid::default(), 1.0, LateralKernel::zero()),
            Err(Error::DuplicateName(_))
        ));
        assert!(net.add_unit("focus", 1.0).is_err());
    }

    #[test]
    fn connect_checks_ids() {
        let mut net = Network::new();
        let a = net
            .add_map("a", grid(), 1.0, LateralKernel::zero())
            .unwrap();
        let b = net
            .add_map("b", grid(), 1.0, LateralKernel::zero())
            .unwrap();
        net.connect(Projection::Afferent {
            source: a.into(),
            target: b.into(),
            weight: 0.25,
            spread: None,
        })
        .unwrap();
        let missing = Projection::Gated {
            source: a.into(),
            modulator: Node::Unit(UnitId(7)),
            target: b.into(),
            weight: 1.0,
        };
        assert!(matches!(net.connect(missing), Err(Error::UnknownId(_))));
        let readout_as_afferent = Projection::Afferent {
            source: a.into(),
            target: Node::Unit(UnitId(0)),
            weight: 1.0,
            spread: None,
        };
        assert!(net.connect(readout_as_afferent).is_err());
    }

    #[test]
    fn inputs_are_additive() {
        let mut net = Network::new();
        let a = net
            .add_map("a", grid(), 1.0, LateralKernel::zero())
            .unwrap();
        let b = net
            .add_map("b", grid(), 1.0, LateralKernel::zero())
            .unwrap();
        let t = net
            .add_map("t", grid(), 1.0, LateralKernel::zero())
            .unwrap();
        assert!(grid_input(&net, t).iter().all(|&v| v == 0.0));
        net.set_map_activity(a, &vec![1.0; 48]).unwrap();
        net.set_map_activity(b, &vec![1.0; 48]).unwrap();
        for (s, w) in [(a, 0.3), (b, 0.7)] {
            net.connect(Projection::Afferent {
                source: s.into(),
                target: t.into(),
                weight: w,
                spread: None,
            })
            .unwrap();
        }
        assert!(grid_input(&net, t).iter().all(|&v| (v - 1.0).abs() < 1e-15));
        // A duplicate connection is applied twice.
        net.connect(Projection::Afferent {
            source: a.into(),
            target: t.into(),
            weight: 0.3,
            spread: None,
        })
        .unwrap();
        assert!(grid_input(&net, t).iter().all(|&v| (v - 1.3).abs() < 1e-15));
    }

    #[test]
    fn gated_by_scalar_unit() {
        let mut net = Network::new();
        let s = net
            .add_map("s", grid(), 1.0, LateralKernel::zero())
            .unwrap();
        let t = net
            .add_map("t", grid(), 1.0, LateralKernel::zero())
            .unwrap();
        let m = net.add_unit("m", 1.0).unwrap();
        net.set_map_activity(s, &vec![0.5; 48]).unwrap();
        net.set_unit_activity(m, 0.8).unwrap();
        net.connect(Projection::Gated {
            source: s.into(),
            modulator: m.into(),
            target: t.into(),
            weight: 2.0,
        })
        .unwrap();
        let expected = 2.0 * 0.5 * 0.8;
        assert!(grid_input(&net, t)
            .iter()
            .all(|&v| (v - expected).abs() < 1e-15));

        // Below the output threshold the modulator reads as zero.
        net.set_unit_output_threshold(m, Some(0.9)).unwrap();
        assert!(grid_input(&net, t).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn readout_reduces_map() {
        let mut net = Network::new();
        let s = net
            .add_map("s", grid(), 1.0, LateralKernel::zero())
            .unwrap();
        let u = net.add_unit("u", 1.0).unwrap();
        let mut vals = vec![0.0; 48];
        vals[5] = 0.75;
        vals[9] = 0.25;
        net.set_map_activity(s, &vals).unwrap();
        net.connect(Projection::Readout {
            source: s,
            target: u,
            reduction: Reduction::Max,
            weight: 2.0,
            offset: 0.25,
        })
        .unwrap();
        assert_eq!(
            net.compute_input(Node::Unit(u)).unwrap(),
            Input::Scalar(1.0)
        );
    }

    #[test]
    fn empty_network_step_is_noop() {
        let mut net = Network::new();
        net.step(P).unwrap();
        assert_eq!(net.map_count(), 0);
    }

    #[test]
    fn unstable_unit_rejected() {
        let mut net = Network::new();
        net.add_unit("u", 0.05).unwrap();
        assert!(matches!(net.step(P), Err(Error::Unstable { .. })));
    }

    #[test]
    fn mutual_symmetric_maps_stay_identical() {
        let k = make_dog_kernel(1.0, 1.0, 0.6, 2.0, 3).unwrap();
        let mut net = Network::new();
        let a = net.add_map("a", grid(), 1.0, k.clone()).unwrap();
        let b = net.add_map("b", grid(), 1.0, k).unwrap();
        for (s, t) in [(a, b), (b, a)] {
            net.connect(Projection::Afferent {
                source: s.into(),
                target: t.into(),
                weight: 0.4,
                spread: None,
            })
            .unwrap();
        }
        let mut ext = vec![0.0; 48];
        ext[20] = 0.9;
        ext[21] = 0.4;
        net.set_map_external(a, Some(ext.clone())).unwrap();
        net.set_map_external(b, Some(ext)).unwrap();
        for _ in 0..200 {
            net.step(P).unwrap();
            assert_eq!(net.map(a).activity(), net.map(b).activity());
        }
    }

    #[test]
    fn update_order_does_not_matter() {
        let k = make_dog_kernel(1.2, 1.0, 0.5, 2.0, 3).unwrap();
        let build = || {
            let mut net = Network::new();
            let ids: Vec<MapId> = (0..3)
                .map(|i| {
                    net.add_map(&format!("m{i}"), grid(), 1.0 + i as f64, k.clone())
                        .unwrap()
                })
                .collect();
            for i in 0..3 {
                net.connect(Projection::Afferent {
                    source: ids[i].into(),
                    target: ids[(i + 1) % 3].into(),
                    weight: 0.3 + 0.1 * i as f64,
                    spread: None,
                })
                .unwrap();
            }
            let ext: Vec<f64> = (0..48).map(|i| ((i * 7) % 11) as f64 / 11.0).collect();
            net.set_map_external(ids[0], Some(ext)).unwrap();
            net
        };
        let mut forward = build();
        let mut reverse = build();
        for _ in 0..50 {
            forward.step_in_order(P, &[0, 1, 2]).unwrap();
            reverse.step_in_order(P, &[2, 1, 0]).unwrap();
        }
        for id in forward.map_ids() {
            assert_eq!(forward.map(id).activity(), reverse.map(id).activity());
        }
    }

    #[test]
    fn remap_identity_and_shift() {
        let g = Grid::new(40, 40).unwrap();
        let mut mem = FieldMap::new(g, 1.0).unwrap();
        let mut disp = FieldMap::new(g, 1.0).unwrap();
        let mut m = g.zeros();
        m[g.index(25, 20)] = 1.0;
        mem.set_activity(&m).unwrap();

        let mut d = g.zeros();
        d[g.index(20, 20)] = 1.0;
        disp.set_activity(&d).unwrap();
        assert_eq!(remap_correlate(&mem, &disp, (20, 20)).unwrap(), m);

        let mut d = g.zeros();
        d[g.index(30, 20)] = 1.0;
        disp.set_activity(&d).unwrap();
        let a = remap_correlate(&mem, &disp, (20, 20)).unwrap();
        let mut expected = g.zeros();
        expected[g.index(15, 20)] = 1.0;
        assert_eq!(a, expected);
    }

    #[test]
    fn remap_off_grid_is_zero() {
        let g = Grid::new(40, 40).unwrap();
        let mut mem = FieldMap::new(g, 1.0).unwrap();
        let mut disp = FieldMap::new(g, 1.0).unwrap();
        let mut m = g.zeros();
        m[g.index(2, 2)] = 1.0;
        mem.set_activity(&m).unwrap();
        let mut d = g.zeros();
        d[g.index(35, 35)] = 1.0;
        disp.set_activity(&d).unwrap();
        assert!(remap_correlate(&mem, &disp, (20, 20))
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }
}
