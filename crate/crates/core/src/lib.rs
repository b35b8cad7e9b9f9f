//! Road-tax and scheduled-line subsidy policies for urban freight.
//!
//! The lower level is a pickup-and-delivery routing problem with time windows
//! in which a request may ride one scheduled-line leg between two stations
//! ([`model`], solved heuristically by [`alns`] and exactly on tiny instances
//! by [`oracle`]). The upper level chooses a subsidy `s` and a road tax `t`
//! subject to a budget ([`policy`]). Synthetic and case-study instances come
//! from [`instgen`] and [`ingest`].

pub mod alns;
pub mod ingest;
pub mod instgen;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod seeds;

pub use model::{
    evaluate_objective, forwarder_cost, modal_shift, modal_shift_by_demand, realized_budget, validate_solution,
    FeasibilityReport, Fleet, Instance, InstanceData, ModelError, Node, NodeKind, Policy, Request, Route, ScheduledLeg,
    SlAssignment, Solution, Stop, StopKind, TimeWindow, Violation, Visit, VisitKind,
};
