use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{AlternativeSet, ModelKind, ModelSpec};
use crate::error::{Error, Result};
use crate::numcore::{Mlp, Rng, Workspace};

/// A shape network and its outer weight. Several [`ShapeFunction`]s may point
/// at the same unit, which is how weight sharing is represented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeUnit {
    pub net: Mlp,
    pub outer_weight: f64,
}

/// Binds one `(alternative, variable)` to a shape unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeFunction {
    alternative: usize,
    variable: usize,
    unit: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    share_group: Option<String>,
}

impl ShapeFunction {
    pub fn new(alternative: usize, variable: usize, unit: usize, share_group: Option<String>) -> Self {
        Self {
            alternative,
            variable,
            unit,
            share_group,
        }
    }

    pub fn alternative(&self) -> usize {
        self.alternative
    }

    pub fn variable(&self) -> usize {
        self.variable
    }

    pub fn unit(&self) -> usize {
        self.unit
    }

    pub fn share_group(&self) -> Option<&str> {
        self.share_group.as_deref()
    }
}

/// Pairwise term `w * NN(x_j, x_k)` of one alternative, with `j < k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionFunction {
    alternative: usize,
    pair: (usize, usize),
    pub net: Mlp,
    pub outer_weight: f64,
}

impl InteractionFunction {
    /// The pair is stored in canonical order regardless of argument order.
    pub fn new(alternative: usize, pair: (usize, usize), net: Mlp, outer_weight: f64) -> Result<Self> {
        let (j, k) = pair;
        if j == k {
            return Err(Error::invalid(format!("interaction pair ({j}, {k}) repeats a variable")));
        }
        if net.input_width() != 2 {
            return Err(Error::invalid("interaction networks take exactly two inputs"));
        }
        Ok(Self {
            alternative,
            pair: (j.min(k), j.max(k)),
            net,
            outer_weight,
        })
    }

    pub fn alternative(&self) -> usize {
        self.alternative
    }

    pub fn pair(&self) -> (usize, usize) {
        self.pair
    }

    pub fn value(&self, xj: f64, xk: f64) -> f64 {
        self.outer_weight * self.net.forward_ws(&[xj, xk], &mut self.net.workspace())
    }
}

// Externally tagged so that deserialization errors keep their full path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityTerms {
    Linear {
        weights: Vec<Vec<f64>>,
    },
    Additive {
        units: Vec<ShapeUnit>,
        /// One per `(alternative, variable)`, in flat column order.
        shapes: Vec<ShapeFunction>,
        interactions: Vec<InteractionFunction>,
    },
    /// One fully connected network per alternative; `None` when the
    /// alternative has no variables.
    Dense {
        nets: Vec<Option<Mlp>>,
    },
}

/// Per-alternative deterministic utilities `V_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct UtilityModel {
    kind: ModelKind,
    alternatives: AlternativeSet,
    ascs: Vec<f64>,
    terms: UtilityTerms,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    kind: ModelKind,
    alternatives: AlternativeSet,
    ascs: Vec<f64>,
    terms: UtilityTerms,
}

impl From<UtilityModel> for ModelRepr {
    fn from(m: UtilityModel) -> Self {
        Self {
            kind: m.kind,
            alternatives: m.alternatives,
            ascs: m.ascs,
            terms: m.terms,
        }
    }
}

impl TryFrom<ModelRepr> for UtilityModel {
    type Error = Error;
    fn try_from(r: ModelRepr) -> Result<Self> {
        let m = UtilityModel {
            kind: r.kind,
            alternatives: r.alternatives,
            ascs: r.ascs,
            terms: r.terms,
        };
        m.validate()?;
        Ok(m)
    }
}

/// Where each parameter block lives in the flat parameter vector.
///
/// The ASC of alternative 0 is pinned to zero and has no slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSegments {
    pub asc: Range<usize>,
    /// Linear weights, shape units or dense networks.
    pub main: Range<usize>,
    pub interaction: Range<usize>,
}

#[derive(Debug, Clone)]
struct Layout {
    linear: Vec<usize>,
    units: Vec<usize>,
    interactions: Vec<usize>,
    dense: Vec<Option<usize>>,
    segments: ParamSegments,
}

fn kind_error(expected: &str, found: ModelKind) -> Error {
    Error::KindMismatch {
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::Numeric {
            index,
            message: format!("non-finite {what}"),
        }),
        None => Ok(()),
    }
}

impl UtilityModel {
    pub fn linear(alternatives: AlternativeSet, ascs: Vec<f64>, weights: Vec<Vec<f64>>) -> Result<Self> {
        let m = Self {
            kind: ModelKind::Linear,
            alternatives,
            ascs,
            terms: UtilityTerms::Linear { weights },
        };
        m.validate()?;
        Ok(m)
    }

    pub fn additive(
        kind: ModelKind,
        alternatives: AlternativeSet,
        ascs: Vec<f64>,
        units: Vec<ShapeUnit>,
        shapes: Vec<ShapeFunction>,
        interactions: Vec<InteractionFunction>,
    ) -> Result<Self> {
        let mut m = Self {
            kind,
            alternatives,
            ascs,
            terms: UtilityTerms::Additive {
                units,
                shapes,
                interactions,
            },
        };
        m.sort_interactions();
        m.validate()?;
        Ok(m)
    }

    pub fn asu_dnn(alternatives: AlternativeSet, ascs: Vec<f64>, nets: Vec<Option<Mlp>>) -> Result<Self> {
        let m = Self {
            kind: ModelKind::AsuDnn,
            alternatives,
            ascs,
            terms: UtilityTerms::Dense { nets },
        };
        m.validate()?;
        Ok(m)
    }

    /// Fresh model for `spec`: zero ASCs, zero linear weights, Glorot-initialized
    /// networks with unit outer weights.
    pub fn initialize(spec: &ModelSpec, alternatives: &AlternativeSet, rng: &mut Rng) -> Result<Self> {
        Self::build(spec, alternatives, Some(rng))
    }

    /// Every parameter zero, so every utility is zero.
    pub fn zeros(spec: &ModelSpec, alternatives: &AlternativeSet) -> Result<Self> {
        let mut m = Self::build(spec, alternatives, None)?;
        if let UtilityTerms::Additive { units, .. } = &mut m.terms {
            for u in units {
                u.outer_weight = 0.0;
            }
        }
        Ok(m)
    }

    fn build(spec: &ModelSpec, alternatives: &AlternativeSet, mut rng: Option<&mut Rng>) -> Result<Self> {
        let k = alternatives.len();
        let mut new_net = |width: usize| -> Result<Mlp> {
            let sizes = spec.layer_sizes(width);
            match rng.as_deref_mut() {
                Some(r) => Mlp::glorot(&sizes, spec.activation, r),
                None => Mlp::zeros(&sizes, spec.activation),
            }
        };
        match spec.kind {
            ModelKind::Linear => {
                if !spec.share_groups.is_empty() {
                    return Err(Error::invalid("linear models do not support share groups"));
                }
                let weights = (0..k).map(|a| vec![0.0; alternatives.variable_count(a)]).collect();
                Self::linear(alternatives.clone(), vec![0.0; k], weights)
            }
            ModelKind::AsuDnn => {
                if !spec.share_groups.is_empty() {
                    return Err(Error::invalid("asu-dnn models do not support share groups"));
                }
                let nets = (0..k)
                    .map(|a| match alternatives.variable_count(a) {
                        0 => Ok(None),
                        w => new_net(w).map(Some),
                    })
                    .collect::<Result<_>>()?;
                Self::asu_dnn(alternatives.clone(), vec![0.0; k], nets)
            }
            ModelKind::GaUnet | ModelKind::GaiUnet => {
                // column -> share group name
                let mut group_of: Vec<Option<&str>> = vec![None; alternatives.total_variables()];
                for g in &spec.share_groups {
                    for (a, v) in g.members(alternatives)? {
                        let slot = &mut group_of[alternatives.flat_index(a, v)];
                        if slot.is_some() {
                            return Err(Error::invalid(format!(
                                "{} belongs to more than one share group",
                                alternatives.column_label(a, v)
                            )));
                        }
                        *slot = Some(g.name.as_str());
                    }
                }
                let mut units = Vec::new();
                let mut shapes = Vec::new();
                let mut group_units: Vec<(&str, usize)> = Vec::new();
                for (a, v) in alternatives.columns() {
                    let group = group_of[alternatives.flat_index(a, v)];
                    let existing = group.and_then(|g| group_units.iter().find(|(n, _)| *n == g).map(|(_, u)| *u));
                    let unit = match existing {
                        Some(u) => u,
                        None => {
                            units.push(ShapeUnit {
                                net: new_net(1)?,
                                outer_weight: 1.0,
                            });
                            let u = units.len() - 1;
                            if let Some(g) = group {
                                group_units.push((g, u));
                            }
                            u
                        }
                    };
                    shapes.push(ShapeFunction::new(a, v, unit, group.map(str::to_string)));
                }
                Self::additive(spec.kind, alternatives.clone(), vec![0.0; k], units, shapes, Vec::new())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.alternatives.len();
        if self.ascs.len() != k {
            return Err(Error::invalid(format!("{} ASCs for {k} alternatives", self.ascs.len())));
        }
        check_finite(&self.ascs, "ASC")?;
        if self.ascs[0] != 0.0 {
            return Err(Error::invalid("the ASC of the first alternative is pinned to 0"));
        }
        match (&self.kind, &self.terms) {
            (ModelKind::Linear, UtilityTerms::Linear { weights }) => {
                if weights.len() != k {
                    return Err(Error::invalid("one linear weight vector per alternative required"));
                }
                for (a, w) in weights.iter().enumerate() {
                    if w.len() != self.alternatives.variable_count(a) {
                        return Err(Error::invalid(format!(
                            "{} has {} variables but {} linear weights",
                            self.alternatives.name(a),
                            self.alternatives.variable_count(a),
                            w.len()
                        )));
                    }
                    check_finite(w, "linear weight")?;
                }
            }
            (ModelKind::GaUnet | ModelKind::GaiUnet, UtilityTerms::Additive { units, shapes, interactions }) => {
                if self.kind == ModelKind::GaUnet && !interactions.is_empty() {
                    return Err(Error::invalid("gaunet models carry no interaction terms"));
                }
                self.validate_additive(units, shapes, interactions)?;
            }
            (ModelKind::AsuDnn, UtilityTerms::Dense { nets }) => {
                if nets.len() != k {
                    return Err(Error::invalid("one dense network per alternative required"));
                }
                for (a, net) in nets.iter().enumerate() {
                    let width = self.alternatives.variable_count(a);
                    match net {
                        None if width == 0 => {}
                        Some(n) if n.input_width() == width => {}
                        _ => {
                            return Err(Error::invalid(format!(
                                "dense network of {} must take {width} inputs",
                                self.alternatives.name(a)
                            )))
                        }
                    }
                }
            }
            (kind, _) => return Err(Error::invalid(format!("terms do not match model kind {kind}"))),
        }
        Ok(())
    }

    fn validate_additive(
        &self,
        units: &[ShapeUnit],
        shapes: &[ShapeFunction],
        interactions: &[InteractionFunction],
    ) -> Result<()> {
        let alts = &self.alternatives;
        if shapes.len() != alts.total_variables() {
            return Err(Error::invalid(format!(
                "{} shape functions for {} variables",
                shapes.len(),
                alts.total_variables()
            )));
        }
        let mut unit_group: Vec<Option<Option<&str>>> = vec![None; units.len()];
        let mut unit_uses = vec![0usize; units.len()];
        for ((a, v), s) in alts.columns().zip(shapes) {
            if s.alternative != a || s.variable != v {
                return Err(Error::invalid(format!(
                    "shape functions must be listed in column order; expected {}",
                    alts.column_label(a, v)
                )));
            }
            if s.unit >= units.len() {
                return Err(Error::invalid(format!("shape unit {} does not exist", s.unit)));
            }
            unit_uses[s.unit] += 1;
            match unit_group[s.unit] {
                None => unit_group[s.unit] = Some(s.share_group()),
                Some(g) if g == s.share_group() && g.is_some() => {}
                Some(_) => {
                    return Err(Error::invalid(format!(
                        "shape unit {} is reused outside a single share group",
                        s.unit
                    )))
                }
            }
        }
        for (u, unit) in units.iter().enumerate() {
            if unit_uses[u] == 0 {
                return Err(Error::invalid(format!("shape unit {u} is never used")));
            }
            if unit.net.input_width() != 1 {
                return Err(Error::invalid(format!("shape unit {u} must take exactly one input")));
            }
            check_finite(&[unit.outer_weight], "outer weight")?;
        }
        // a share group must map onto exactly one unit
        let mut group_unit: Vec<(&str, usize)> = Vec::new();
        for s in shapes {
            if let Some(g) = s.share_group() {
                match group_unit.iter().find(|(n, _)| *n == g) {
                    Some((_, u)) if *u != s.unit => {
                        return Err(Error::invalid(format!("share group {g:?} spans several units")))
                    }
                    Some(_) => {}
                    None => group_unit.push((g, s.unit)),
                }
            }
        }
        for w in interactions.windows(2) {
            if (w[0].alternative, w[0].pair) >= (w[1].alternative, w[1].pair) {
                return Err(Error::invalid("interaction terms must be unique and ordered"));
            }
        }
        for it in interactions {
            if it.alternative >= alts.len() {
                return Err(Error::invalid(format!("interaction alternative {} out of range", it.alternative)));
            }
            let (j, k) = it.pair;
            if !(j < k && k < alts.variable_count(it.alternative)) {
                return Err(Error::invalid(format!(
                    "interaction pair ({j}, {k}) invalid for {}",
                    alts.name(it.alternative)
                )));
            }
            if it.net.input_width() != 2 {
                return Err(Error::invalid("interaction networks take exactly two inputs"));
            }
            check_finite(&[it.outer_weight], "interaction weight")?;
        }
        Ok(())
    }

    fn sort_interactions(&mut self) {
        if let UtilityTerms::Additive { interactions, .. } = &mut self.terms {
            interactions.sort_by_key(|it| (it.alternative, it.pair));
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn alternatives(&self) -> &AlternativeSet {
        &self.alternatives
    }

    pub fn ascs(&self) -> &[f64] {
        &self.ascs
    }

    /// Set the ASC of `alt` (alternative 0 stays pinned at zero).
    pub fn set_asc(&mut self, alt: usize, value: f64) -> Result<()> {
        if alt == 0 {
            return Err(Error::invalid("the ASC of the first alternative is pinned to 0"));
        }
        if alt >= self.ascs.len() {
            return Err(Error::invalid(format!("alternative {alt} out of range")));
        }
        self.ascs[alt] = value;
        Ok(())
    }

    pub fn terms(&self) -> &UtilityTerms {
        &self.terms
    }

    pub fn linear_weights(&self) -> Option<&[Vec<f64>]> {
        match &self.terms {
            UtilityTerms::Linear { weights } => Some(weights),
            _ => None,
        }
    }

    pub fn linear_weights_mut(&mut self) -> Option<&mut [Vec<f64>]> {
        match &mut self.terms {
            UtilityTerms::Linear { weights } => Some(weights),
            _ => None,
        }
    }

    pub fn units(&self) -> &[ShapeUnit] {
        match &self.terms {
            UtilityTerms::Additive { units, .. } => units,
            _ => &[],
        }
    }

    pub fn units_mut(&mut self) -> &mut [ShapeUnit] {
        match &mut self.terms {
            UtilityTerms::Additive { units, .. } => units,
            _ => &mut [],
        }
    }

    pub fn shapes(&self) -> &[ShapeFunction] {
        match &self.terms {
            UtilityTerms::Additive { shapes, .. } => shapes,
            _ => &[],
        }
    }

    pub fn interactions(&self) -> &[InteractionFunction] {
        match &self.terms {
            UtilityTerms::Additive { interactions, .. } => interactions,
            _ => &[],
        }
    }

    pub fn interactions_mut(&mut self) -> &mut [InteractionFunction] {
        match &mut self.terms {
            UtilityTerms::Additive { interactions, .. } => interactions,
            _ => &mut [],
        }
    }

    pub fn dense_nets(&self) -> &[Option<Mlp>] {
        match &self.terms {
            UtilityTerms::Dense { nets } => nets,
            _ => &[],
        }
    }

    pub fn dense_nets_mut(&mut self) -> &mut [Option<Mlp>] {
        match &mut self.terms {
            UtilityTerms::Dense { nets } => nets,
            _ => &mut [],
        }
    }

    /// Shape function of `(alt, var)`.
    pub fn shape(&self, alt: usize, var: usize) -> Option<&ShapeFunction> {
        if alt >= self.alternatives.len() || var >= self.alternatives.variable_count(alt) {
            return None;
        }
        self.shapes().get(self.alternatives.flat_index(alt, var))
    }

    /// The unit behind `(alt, var)`.
    pub fn shape_unit(&self, alt: usize, var: usize) -> Option<&ShapeUnit> {
        self.shape(alt, var).map(|s| &self.units()[s.unit])
    }

    pub fn shape_unit_mut(&mut self, alt: usize, var: usize) -> Option<&mut ShapeUnit> {
        let u = self.shape(alt, var)?.unit;
        self.units_mut().get_mut(u)
    }

    /// Append interaction networks for the given pairs of each alternative.
    /// New interaction weights start at zero so the utilities are unchanged.
    pub fn add_interactions(
        &mut self,
        pairs: &[Vec<(usize, usize)>],
        spec: &ModelSpec,
        rng: &mut Rng,
    ) -> Result<()> {
        if self.kind != ModelKind::GaiUnet {
            return Err(kind_error("gaiunet", self.kind));
        }
        if pairs.len() != self.alternatives.len() {
            return Err(Error::invalid("one pair list per alternative required"));
        }
        let sizes = spec.layer_sizes(2);
        let mut added = Vec::new();
        for (a, list) in pairs.iter().enumerate() {
            for &p in list {
                let net = Mlp::glorot(&sizes, spec.activation, rng)?;
                added.push(InteractionFunction::new(a, p, net, 0.0)?);
            }
        }
        if let UtilityTerms::Additive { interactions, .. } = &mut self.terms {
            interactions.extend(added);
        }
        self.sort_interactions();
        self.validate()
    }

    fn layout(&self) -> Layout {
        let k = self.alternatives.len();
        let asc = 0..k.saturating_sub(1);
        let mut off = asc.end;
        let mut linear = Vec::new();
        let mut units = Vec::new();
        let mut interactions = Vec::new();
        let mut dense = Vec::new();
        match &self.terms {
            UtilityTerms::Linear { weights } => {
                for w in weights {
                    linear.push(off);
                    off += w.len();
                }
            }
            UtilityTerms::Additive { units: us, .. } => {
                for u in us {
                    units.push(off);
                    off += 1 + u.net.param_count();
                }
            }
            UtilityTerms::Dense { nets } => {
                for n in nets {
                    dense.push(n.as_ref().map(|_| off));
                    off += n.as_ref().map_or(0, Mlp::param_count);
                }
            }
        }
        let main = asc.end..off;
        for it in self.interactions() {
            interactions.push(off);
            off += 1 + it.net.param_count();
        }
        Layout {
            linear,
            units,
            interactions,
            dense,
            segments: ParamSegments {
                asc,
                interaction: main.end..off,
                main,
            },
        }
    }

    pub fn segments(&self) -> ParamSegments {
        self.layout().segments
    }

    pub fn param_count(&self) -> usize {
        self.layout().segments.interaction.end
    }

    /// All trainable parameters in flat order: free ASCs, main terms, interactions.
    pub fn params(&self) -> Vec<f64> {
        let layout = self.layout();
        let mut out = vec![0.0; layout.segments.interaction.end];
        out[layout.segments.asc.clone()].copy_from_slice(&self.ascs[1..]);
        match &self.terms {
            UtilityTerms::Linear { weights } => {
                for (w, &o) in weights.iter().zip(&layout.linear) {
                    out[o..o + w.len()].copy_from_slice(w);
                }
            }
            UtilityTerms::Additive { units, interactions, .. } => {
                for (u, &o) in units.iter().zip(&layout.units) {
                    out[o] = u.outer_weight;
                    u.net.write_params(&mut out[o + 1..o + 1 + u.net.param_count()]);
                }
                for (it, &o) in interactions.iter().zip(&layout.interactions) {
                    out[o] = it.outer_weight;
                    it.net.write_params(&mut out[o + 1..o + 1 + it.net.param_count()]);
                }
            }
            UtilityTerms::Dense { nets } => {
                for (n, o) in nets.iter().zip(&layout.dense) {
                    if let (Some(n), Some(o)) = (n, o) {
                        n.write_params(&mut out[*o..*o + n.param_count()]);
                    }
                }
            }
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let layout = self.layout();
        if params.len() != layout.segments.interaction.end {
            return Err(Error::invalid(format!(
                "model has {} parameters, got {}",
                layout.segments.interaction.end,
                params.len()
            )));
        }
        self.ascs[1..].copy_from_slice(&params[layout.segments.asc.clone()]);
        match &mut self.terms {
            UtilityTerms::Linear { weights } => {
                for (w, &o) in weights.iter_mut().zip(&layout.linear) {
                    let n = w.len();
                    w.copy_from_slice(&params[o..o + n]);
                }
            }
            UtilityTerms::Additive { units, interactions, .. } => {
                for (u, &o) in units.iter_mut().zip(&layout.units) {
                    u.outer_weight = params[o];
                    let n = u.net.param_count();
                    u.net.read_params(&params[o + 1..o + 1 + n]);
                }
                for (it, &o) in interactions.iter_mut().zip(&layout.interactions) {
                    it.outer_weight = params[o];
                    let n = it.net.param_count();
                    it.net.read_params(&params[o + 1..o + 1 + n]);
                }
            }
            UtilityTerms::Dense { nets } => {
                for (n, o) in nets.iter_mut().zip(&layout.dense) {
                    if let (Some(n), Some(o)) = (n, o) {
                        let c = n.param_count();
                        n.read_params(&params[*o..*o + c]);
                    }
                }
            }
        }
        Ok(())
    }

    fn check_alt(&self, alt: usize, x_alt: &[f64]) -> Result<()> {
        if alt >= self.alternatives.len() {
            return Err(Error::invalid(format!("alternative {alt} out of range")));
        }
        let want = self.alternatives.variable_count(alt);
        if x_alt.len() != want {
            return Err(Error::invalid(format!(
                "{} expects {want} variables, got {}",
                self.alternatives.name(alt),
                x_alt.len()
            )));
        }
        if let Some(i) = x_alt.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                index: i,
                message: format!("non-finite input for {}", self.alternatives.name(alt)),
            });
        }
        Ok(())
    }

    /// `V_alt` for whatever kind this model is.
    pub fn alternative_utility(&self, alt: usize, x_alt: &[f64]) -> Result<f64> {
        self.check_alt(alt, x_alt)?;
        let asc = self.ascs[alt];
        let v = match &self.terms {
            UtilityTerms::Linear { weights } => {
                asc + weights[alt].iter().zip(x_alt).map(|(w, x)| w * x).sum::<f64>()
            }
            UtilityTerms::Additive { units, .. } => {
                let mut v = asc;
                for (j, &x) in x_alt.iter().enumerate() {
                    let u = &units[self.shape(alt, j).unwrap().unit];
                    v += u.outer_weight * u.net.forward(&[x])?;
                }
                for it in self.interactions().iter().filter(|it| it.alternative == alt) {
                    let (j, k) = it.pair;
                    v += it.outer_weight * it.net.forward(&[x_alt[j], x_alt[k]])?;
                }
                v
            }
            UtilityTerms::Dense { nets } => match &nets[alt] {
                Some(n) => asc + n.forward(x_alt)?,
                None => asc,
            },
        };
        Ok(v)
    }

    pub fn utility_linear(&self, alt: usize, x_alt: &[f64]) -> Result<f64> {
        if self.kind != ModelKind::Linear {
            return Err(kind_error("linear", self.kind));
        }
        self.alternative_utility(alt, x_alt)
    }

    pub fn utility_gaunet(&self, alt: usize, x_alt: &[f64]) -> Result<f64> {
        if self.kind != ModelKind::GaUnet {
            return Err(kind_error("gaunet", self.kind));
        }
        self.alternative_utility(alt, x_alt)
    }

    pub fn utility_gaiunet(&self, alt: usize, x_alt: &[f64]) -> Result<f64> {
        if self.kind != ModelKind::GaiUnet {
            return Err(kind_error("gaiunet", self.kind));
        }
        self.alternative_utility(alt, x_alt)
    }

    pub fn utility_asudnn(&self, alt: usize, x_alt: &[f64]) -> Result<f64> {
        if self.kind != ModelKind::AsuDnn {
            return Err(kind_error("asu_dnn", self.kind));
        }
        self.alternative_utility(alt, x_alt)
    }

    /// `(V_1, ..., V_K)` for one observation.
    pub fn utility_vector(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        if x.len() != self.alternatives.len() {
            return Err(Error::invalid(format!(
                "expected variables for {} alternatives, got {}",
                self.alternatives.len(),
                x.len()
            )));
        }
        x.iter()
            .enumerate()
            .map(|(a, xa)| self.alternative_utility(a, xa))
            .collect()
    }

    /// Contribution `w * x` (linear) or `w * NN(x)` (additive) of one variable.
    pub fn variable_contribution(&self, alt: usize, var: usize, value: f64) -> Result<f64> {
        match &self.terms {
            UtilityTerms::Linear { weights } => weights
                .get(alt)
                .and_then(|w| w.get(var))
                .map(|w| w * value)
                .ok_or_else(|| Error::invalid(format!("no variable {var} for alternative {alt}"))),
            UtilityTerms::Additive { units, .. } => {
                let s = self
                    .shape(alt, var)
                    .ok_or_else(|| Error::invalid(format!("no variable {var} for alternative {alt}")))?;
                let u = &units[s.unit];
                Ok(u.outer_weight * u.net.forward(&[value])?)
            }
            UtilityTerms::Dense { .. } => Err(kind_error("linear, gaunet or gaiunet", self.kind)),
        }
    }

    /// `w_ij * NN_ij(g)` at each grid point, in model input units.
    pub fn shape_curve(&self, alt: usize, var: usize, grid: &[f64]) -> Result<Vec<f64>> {
        if !self.kind.is_additive() {
            return Err(kind_error("gaunet or gaiunet", self.kind));
        }
        if grid.is_empty() {
            return Err(Error::invalid("empty grid"));
        }
        grid.iter().map(|&g| self.variable_contribution(alt, var, g)).collect()
    }

    pub fn cache(&self) -> EvalCache {
        EvalCache::new(self)
    }

    /// Evaluate all utilities and intermediate term outputs into `cache`.
    /// Dimensions are not re-checked; use [`UtilityModel::utility_vector`] for
    /// untrusted inputs.
    pub fn evaluate(&self, x: &[Vec<f64>], cache: &mut EvalCache) {
        cache.utilities.copy_from_slice(&self.ascs);
        match &self.terms {
            UtilityTerms::Linear { weights } => {
                for (a, w) in weights.iter().enumerate() {
                    cache.utilities[a] += w.iter().zip(&x[a]).map(|(w, x)| w * x).sum::<f64>();
                }
            }
            UtilityTerms::Additive { units, shapes, interactions } => {
                for (s_idx, s) in shapes.iter().enumerate() {
                    let u = &units[s.unit];
                    let raw = u.net.forward_ws(&x[s.alternative][s.variable..=s.variable], &mut cache.shape_ws[s_idx]);
                    cache.shape_outputs[s_idx] = raw;
                    cache.utilities[s.alternative] += u.outer_weight * raw;
                }
                for (i, it) in interactions.iter().enumerate() {
                    let xa = &x[it.alternative];
                    let pair = [xa[it.pair.0], xa[it.pair.1]];
                    let raw = it.net.forward_ws(&pair, &mut cache.interaction_ws[i]);
                    cache.interaction_outputs[i] = raw;
                    cache.utilities[it.alternative] += it.outer_weight * raw;
                }
            }
            UtilityTerms::Dense { nets } => {
                for (a, n) in nets.iter().enumerate() {
                    if let (Some(n), Some(ws)) = (n, cache.dense_ws[a].as_mut()) {
                        cache.utilities[a] += n.forward_ws(&x[a], ws);
                    }
                }
            }
        }
    }

    /// Backpropagate through the state left by [`UtilityModel::evaluate`],
    /// adding the parameter gradient into `grad` (flat layout of
    /// [`UtilityModel::params`]).
    pub fn accumulate_gradient(&self, x: &[Vec<f64>], cache: &mut EvalCache, upstream: &Upstream<'_>, grad: &mut [f64]) {
        let layout = &cache.layout;
        for a in 1..self.ascs.len() {
            grad[layout.segments.asc.start + a - 1] += upstream.utility[a];
        }
        match &self.terms {
            UtilityTerms::Linear { weights } => {
                for (a, w) in weights.iter().enumerate() {
                    let o = layout.linear[a];
                    let d = upstream.utility[a];
                    for (j, xj) in x[a].iter().enumerate().take(w.len()) {
                        grad[o + j] += d * xj;
                    }
                }
            }
            UtilityTerms::Additive { units, shapes, interactions } => {
                for (s_idx, s) in shapes.iter().enumerate() {
                    let mut dv = upstream.utility[s.alternative];
                    if let Some(extra) = upstream.shape_extra {
                        dv += extra[s_idx];
                    }
                    if dv == 0.0 {
                        continue;
                    }
                    let u = &units[s.unit];
                    let o = layout.units[s.unit];
                    grad[o] += dv * cache.shape_outputs[s_idx];
                    let n = u.net.param_count();
                    u.net.backward_ws(&mut cache.shape_ws[s_idx], dv * u.outer_weight, &mut grad[o + 1..o + 1 + n], None);
                }
                for (i, it) in interactions.iter().enumerate() {
                    let mut dv = upstream.utility[it.alternative];
                    if let Some(extra) = upstream.interaction_extra {
                        dv += extra[i];
                    }
                    if dv == 0.0 {
                        continue;
                    }
                    let o = layout.interactions[i];
                    grad[o] += dv * cache.interaction_outputs[i];
                    let n = it.net.param_count();
                    it.net.backward_ws(
                        &mut cache.interaction_ws[i],
                        dv * it.outer_weight,
                        &mut grad[o + 1..o + 1 + n],
                        None,
                    );
                }
            }
            UtilityTerms::Dense { nets } => {
                for (a, n) in nets.iter().enumerate() {
                    if let (Some(n), Some(ws), Some(o)) = (n, cache.dense_ws[a].as_mut(), layout.dense[a]) {
                        let c = n.param_count();
                        n.backward_ws(ws, upstream.utility[a], &mut grad[o..o + c], None);
                    }
                }
            }
        }
    }

    /// Flat parameter index of the outer weight of each shape unit.
    pub fn unit_weight_indices(&self) -> Vec<usize> {
        self.layout().units
    }

    /// Flat parameter index of the outer weight of each interaction.
    pub fn interaction_weight_indices(&self) -> Vec<usize> {
        self.layout().interactions
    }
}

/// Per-observation intermediate values reused between the forward pass and
/// backpropagation.
#[derive(Debug, Clone)]
pub struct EvalCache {
    layout: Layout,
    pub utilities: Vec<f64>,
    /// Raw `NN_ij` output per shape function, in column order.
    pub shape_outputs: Vec<f64>,
    /// Raw `NN_ijk` output per interaction term.
    pub interaction_outputs: Vec<f64>,
    shape_ws: Vec<Workspace>,
    interaction_ws: Vec<Workspace>,
    dense_ws: Vec<Option<Workspace>>,
}

impl EvalCache {
    pub fn new(model: &UtilityModel) -> Self {
        let units = model.units();
        Self {
            layout: model.layout(),
            utilities: vec![0.0; model.alternatives.len()],
            shape_outputs: vec![0.0; model.shapes().len()],
            interaction_outputs: vec![0.0; model.interactions().len()],
            shape_ws: model.shapes().iter().map(|s| units[s.unit].net.workspace()).collect(),
            interaction_ws: model.interactions().iter().map(|it| it.net.workspace()).collect(),
            dense_ws: model
                .dense_nets()
                .iter()
                .map(|n| n.as_ref().map(Mlp::workspace))
                .collect(),
        }
    }
}

/// Derivatives of an objective with respect to the utilities and, optionally,
/// directly with respect to individual term contributions `v = w * NN`.
#[derive(Debug, Clone, Copy)]
pub struct Upstream<'a> {
    pub utility: &'a [f64],
    pub shape_extra: Option<&'a [f64]>,
    pub interaction_extra: Option<&'a [f64]>,
}

impl<'a> Upstream<'a> {
    pub fn utilities(utility: &'a [f64]) -> Self {
        Self {
            utility,
            shape_extra: None,
            interaction_extra: None,
        }
    }
}
