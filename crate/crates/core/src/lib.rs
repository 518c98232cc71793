//! River-basin water allocation.
//!
//! A basin is a directed, capacitated flow network of sources, storages,
//! junctions, demand nodes and sinks. Demand units of five kinds draw on
//! five source kinds subject to a quality matrix. The optimizer assembles a
//! linear programme over daily steps that trades squared fractional deficit
//! against economic and CO2 impact, solves it with [`basin_lp`], and returns
//! an [`AllocationPlan`] audited by replaying its flows through the network.
//!
//! Volumes are hm³ and rates hm³/day throughout.

// `!(x < y)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod demand;
pub mod exact;
pub mod impact;
pub mod io;
pub mod network;
pub mod optimizer;
pub mod quality;
pub mod report;
pub mod scenario;
pub mod series;
pub mod source;
pub mod units;

pub use checks::{consistency_checks, IdentityCheck, ReferenceData};
pub use demand::{
    expand_demand, ingest_forecast, sdu_golf_demand, urban_satisfaction, wetland_demand, DemandKind,
    DemandProfile, DemandUnit, SatisfactionReport,
};
pub use impact::{
    demand_co2, derive_co2_factor, economic_impact, impact_report, source_co2, Benefit, GridEmissionFactor,
    ImpactReport, SourceSpec, SupplyTensor,
};
pub use network::{
    simulate, validate_network, FlowAssignment, Link, NetworkModel, Node, NodeId, NodeKind, SimulationReport,
    ValidationReport,
};
pub use optimizer::{
    aggregate_deficits, build_problem, lexicographic_refine, optimize, AllocationPlan, DeficitAggregate,
    Family, OptimizeError, OptimizeOptions,
};
pub use io::{
    export_plan, import_plan, import_plan_for, load_scenario, parse_scenario, save_scenario, LoadError, LoadOptions,
    LoadedScenario, PlanFile,
};
pub use quality::{allowed_sources, QualityMatrix};
pub use report::{allocation_rows, deficit_view, kpi_view, Granularity, GroupBy};
pub use scenario::{CheckReport, CostWeights, Normalizers, Scenario};
pub use series::{DateRange, Series};
pub use source::SourceKind;
