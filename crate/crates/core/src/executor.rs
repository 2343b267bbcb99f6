//! Program execution, the fixed Strang baseline and the assembled model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::field::{Boundary, Field};
use crate::policy::{DurationMode, Policy, Program};
use crate::primitives::{apply_primitive_with, default_dictionary, swap_boundary_variant, PrimitiveSpec, Substeps};
use crate::system::{check_state, PdeParams, System};

/// Any state entry above this magnitude counts as a blow-up.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    pub system: System,
    pub primitives: Vec<PrimitiveSpec>,
}

impl Dictionary {
    pub fn canonical(system: System) -> Self {
        Dictionary { system, primitives: default_dictionary(system) }
    }

    pub fn new(system: System, primitives: Vec<PrimitiveSpec>) -> Result<Self> {
        if primitives.is_empty() {
            return Err(Error::InvalidConfig("empty dictionary".into()));
        }
        for p in &primitives {
            if p.system != system || !p.mechanism.supports(system) {
                return Err(Error::MechanismMismatch { system, mechanism: p.mechanism.name().into() });
            }
        }
        Ok(Dictionary { system, primitives })
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.primitives.iter().map(|p| p.label()).collect()
    }

    /// Every primitive replaced by its variant for `boundary`.
    pub fn swap_boundary(&self, boundary: Boundary) -> Result<Self> {
        let primitives = self.primitives.iter().map(|p| swap_boundary_variant(p, boundary)).collect::<Result<_>>()?;
        Ok(Dictionary { system: self.system, primitives })
    }

    /// Appends `spec` unless an identical primitive is present. Returns its index.
    pub fn add_primitive(&mut self, spec: PrimitiveSpec) -> Result<usize> {
        if spec.system != self.system {
            return Err(Error::MechanismMismatch { system: self.system, mechanism: spec.mechanism.name().into() });
        }
        if let Some(i) = self.primitives.iter().position(|p| *p == spec) {
            return Ok(i);
        }
        self.primitives.push(spec);
        Ok(self.primitives.len() - 1)
    }
}

pub fn execute(program: &Program, dict: &Dictionary, params: &PdeParams, u0: &Field) -> Result<Field> {
    execute_with(program, dict, params, u0, Substeps::default())
}

/// Applies the steps left to right. A non-finite or exploding intermediate
/// state fails with the index of the offending step.
pub fn execute_with(
    program: &Program,
    dict: &Dictionary,
    params: &PdeParams,
    u0: &Field,
    substeps: Substeps,
) -> Result<Field> {
    program.validate(dict.len())?;
    if params.system() != dict.system {
        return Err(Error::InvalidConfig(format!(
            "parameters for {} with a {} dictionary",
            params.system(),
            dict.system
        )));
    }
    check_state(dict.system, u0)?;
    let mut u = u0.clone();
    for (r, s) in program.steps.iter().enumerate() {
        u = match apply_primitive_with(&dict.primitives[s.primitive], params, &u, s.duration, substeps) {
            Ok(v) => v,
            Err(Error::StiffnessCap { .. }) => return Err(Error::ExecutionDiverged { step: r }),
            Err(e) => return Err(e),
        };
        if !u.is_finite() || u.max_abs() > DIVERGENCE_THRESHOLD {
            return Err(Error::ExecutionDiverged { step: r });
        }
    }
    Ok(u)
}

/// The classical Strang program with `n` substeps of size `h = T / n`.
/// Each sub-flow advances its full share of the substep.
pub fn strang_program(n_primitives: usize, t: f64, n: usize) -> Result<Program> {
    if n == 0 {
        return Err(Error::InvalidConfig("Strang needs at least one substep".into()));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidDuration(t));
    }
    let h = t / n as f64;
    let cycle: Vec<(usize, f64)> = match n_primitives {
        2 => vec![(0, 0.5 * h), (1, h), (0, 0.5 * h)],
        3 => vec![(0, 0.5 * h), (1, 0.5 * h), (2, h), (1, 0.5 * h), (0, 0.5 * h)],
        m => return Err(Error::InvalidConfig(format!("Strang schedule needs 2 or 3 primitives, got {m}"))),
    };
    Ok(Program::new((0..n).flat_map(|_| cycle.iter().copied())))
}

/// Primitive calls used by a Strang run.
pub fn strang_calls(n_primitives: usize, n: usize) -> usize {
    (2 * n_primitives - 1) * n
}

pub fn strang_schedule(dict: &Dictionary, params: &PdeParams, u0: &Field, t: f64, n: usize) -> Result<Field> {
    strang_schedule_with(dict, params, u0, t, n, Substeps::default())
}

pub fn strang_schedule_with(
    dict: &Dictionary,
    params: &PdeParams,
    u0: &Field,
    t: f64,
    n: usize,
    substeps: Substeps,
) -> Result<Field> {
    execute_with(&strang_program(dict.len(), t, n)?, dict, params, u0, substeps)
}

/// Policy, dictionary and feature map: the full learned solver.
#[derive(Clone, Debug, PartialEq)]
pub struct HycopModel {
    pub policy: Policy,
    pub dictionary: Dictionary,
    pub features: FeatureSet,
    pub mode: DurationMode,
}

impl HycopModel {
    pub fn new(policy: Policy, dictionary: Dictionary, features: FeatureSet, mode: DurationMode) -> Result<Self> {
        if policy.arch.n_primitives != dictionary.len() {
            return Err(Error::ParamShape { expected: dictionary.len(), found: policy.arch.n_primitives });
        }
        Ok(HycopModel { policy, dictionary, features, mode })
    }

    /// Appends `spec` to the dictionary and widens the policy to match; a
    /// primitive already present leaves the model unchanged. Returns its index.
    pub fn add_primitive(&mut self, spec: PrimitiveSpec, new_bias: f64) -> Result<usize> {
        let before = self.dictionary.len();
        let i = self.dictionary.add_primitive(spec)?;
        if self.dictionary.len() > before {
            self.policy = self.policy.with_added_primitive(new_bias)?;
        }
        Ok(i)
    }

    pub fn program(&self, params: &PdeParams, u0: &Field, t: f64) -> Result<Program> {
        let f = self.features.extract(params, u0, t)?;
        self.policy.decode(&f, t, self.mode)
    }

    pub fn predict(&self, params: &PdeParams, u0: &Field, t: f64) -> Result<Field> {
        self.predict_with(params, u0, t, Substeps::default())
    }

    pub fn predict_with(&self, params: &PdeParams, u0: &Field, t: f64, substeps: Substeps) -> Result<Field> {
        let prog = self.program(params, u0, t)?;
        execute_with(&prog, &self.dictionary, params, u0, substeps)
    }

    /// One independent program per query time, all starting from `u0`.
    pub fn predict_multi(&self, params: &PdeParams, u0: &Field, times: &[f64]) -> Result<Vec<Field>> {
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig("query times must be sorted".into()));
        }
        times.iter().map(|&t| self.predict(params, u0, t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use crate::policy::PolicyArch;
    use crate::reference::{solve_coupled_finestep, solve_exact_ad};
    use std::f64::consts::PI;

    fn ad_case() -> (PdeParams, Field) {
        let g = Grid::new_1d(64, 10.0, Boundary::Periodic).unwrap();
        let u0 = Field::from_fn_1d(g, |x| (-(x - 5.0f64).powi(2)).exp() + 0.3 * (2.0 * PI * x / 10.0).sin());
        (PdeParams::Ad1d { c: 1.3, d: 0.07 }, u0)
    }

    fn burgers_case() -> (PdeParams, Field) {
        let g = Grid::new_1d(64, 2.0, Boundary::Periodic).unwrap();
        let u0 = Field::from_fn_1d(g, |x| 0.5 * (PI * x).sin() + 0.2);
        (PdeParams::Burgers1d { nu: 0.05 }, u0)
    }

    #[test]
    fn zero_duration_program_is_identity() {
        let (p, u0) = ad_case();
        let d = Dictionary::canonical(System::Ad1d);
        let out = execute(&Program::new([(0, 0.0), (1, 0.0), (0, 0.0)]), &d, &p, &u0).unwrap();
        assert_eq!(out, u0);
    }

    #[test]
    fn commuting_free_program_is_exact() {
        let (p, u0) = ad_case();
        let d = Dictionary::canonical(System::Ad1d);
        let t = 0.7;
        let out = execute(&Program::new([(0, t), (1, t)]), &d, &p, &u0).unwrap();
        let exact = solve_exact_ad(&p, &u0, t).unwrap();
        assert!(out.l2_distance(&exact) / exact.l2_norm() < 1e-10);
        for n in [1, 3, 8] {
            let s = strang_schedule(&d, &p, &u0, t, n).unwrap();
            assert!(s.l2_distance(&exact) / exact.l2_norm() < 1e-9);
        }
    }

    #[test]
    fn strang_one_substep_is_single_triple() {
        let (p, u0) = burgers_case();
        let d = Dictionary::canonical(System::Burgers1d);
        let a = strang_schedule(&d, &p, &u0, 0.2, 1).unwrap();
        let b = execute(&Program::new([(0, 0.1), (1, 0.2), (0, 0.1)]), &d, &p, &u0).unwrap();
        assert_eq!(a, b);
        assert_eq!(strang_program(3, 1.0, 2).unwrap().len(), strang_calls(3, 2));
        assert!(strang_program(4, 1.0, 2).is_err());
    }

    #[test]
    fn operator_order_difference_is_second_order() {
        let (p, u0) = burgers_case();
        let d = Dictionary::canonical(System::Burgers1d);
        let gap = |tau: f64| {
            let a = execute(&Program::new([(0, tau), (1, tau)]), &d, &p, &u0).unwrap();
            let b = execute(&Program::new([(1, tau), (0, tau)]), &d, &p, &u0).unwrap();
            a.l2_distance(&b)
        };
        let ratio = gap(0.04) / gap(0.02);
        assert!((ratio - 4.0).abs() < 0.4, "{ratio}");
    }

    #[test]
    fn strang_converges_at_second_order_on_burgers() {
        let (p, u0) = burgers_case();
        let d = Dictionary::canonical(System::Burgers1d);
        let t = 0.5;
        let r = solve_coupled_finestep(&p, &u0, t).unwrap();
        let e: Vec<f64> = [4, 8, 16]
            .iter()
            .map(|&n| strang_schedule(&d, &p, &u0, t, n).unwrap().l2_distance(&r))
            .collect();
        let s1 = (e[0] / e[1]).log2();
        let s2 = (e[1] / e[2]).log2();
        assert!((1.7..2.3).contains(&s1) && (1.7..2.3).contains(&s2), "{e:?}");
    }

    #[test]
    fn divergence_is_localised() {
        let g = Grid::new_1d(32, 10.0, Boundary::Periodic).unwrap();
        let u0 = Field::from_fn_1d(g, |x| 0.5 + 0.1 * (2.0 * PI * x / 10.0).sin());
        let mut d = Dictionary::canonical(System::Ad1d);
        let rate = PrimitiveSpec::new(System::Ad1d, crate::primitives::Mechanism::Reaction)
            .unwrap()
            .with_reaction_rate(40.0);
        let j = d.add_primitive(rate).unwrap();
        assert_eq!(d.add_primitive(rate).unwrap(), j);
        assert_eq!(d.len(), 3);
        let p = PdeParams::Ad1d { c: 1.0, d: 0.1 };
        let prog = Program::new([(0, 0.1), (1, 0.1), (j, 2.0)]);
        match execute(&prog, &d, &p, &u0.scaled(-1.0)) {
            Err(Error::ExecutionDiverged { step }) => assert_eq!(step, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn multi_time_matches_single_queries() {
        let (p, u0) = burgers_case();
        let d = Dictionary::canonical(System::Burgers1d);
        let arch = PolicyArch::new(4, 4, 2);
        let m = HycopModel::new(Policy::init(arch, 3).unwrap(), d, FeatureSet::Dimensionless, DurationMode::PerMechanism)
            .unwrap();
        let outs = m.predict_multi(&p, &u0, &[0.1, 0.3, 0.3]).unwrap();
        assert_eq!(outs[0], m.predict(&p, &u0, 0.1).unwrap());
        assert_eq!(outs[1], outs[2]);
        assert!(m.predict_multi(&p, &u0, &[0.3, 0.1]).is_err());
    }

    #[test]
    fn boundary_swap_applies_to_swe_only() {
        let d = Dictionary::canonical(System::Swe1d).swap_boundary(Boundary::ReflectiveWall).unwrap();
        assert!(d.primitives.iter().all(|p| p.boundary == Boundary::ReflectiveWall));
        assert!(Dictionary::canonical(System::Burgers1d).swap_boundary(Boundary::ReflectiveWall).is_err());
    }
}
