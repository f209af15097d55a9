//! Exact solvers for extensive-form, backward, strict and interim rationalizability
//! in finite dynamic games where players may disagree about the payoff state space.

pub mod conjecture;
pub mod epistemic;
pub mod game;
pub mod lp;
pub mod payoff;
pub mod perturb;
pub mod rational;
pub mod solver;

pub use conjecture::{Atom, Belief, Cps, ModelContext};
pub use epistemic::{SubjectiveModel, SubjectiveStructure, TypeId, TypeSpec, TypeStructure};
pub use game::{ExtensiveForm, NodeId, PlayerId, Strategy, StrategyId, TreeSpec, ROOT};
pub use payoff::{CanonicalRepresentation, StandardPayoffStructure};
pub use rational::Rational;
pub use solver::{Concept, SolutionTrace, SolverConfig};
