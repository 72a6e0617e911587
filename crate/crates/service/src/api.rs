//! Read-only HTTP API over one run.
//!
//! Every body is JSON with a `schema_version`. Numeric payloads name their
//! units; per-unit quantities come with the feeder bases.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde::Serialize;
use tower_http::cors::{Any, CorsLayer};
use transitgrid_core::scenario::{
    BebId, CouplingLink, NodeId, PerUnitBases, Road, RouteId, Scenario, ScenarioCounts, StationId, TimeGrid,
    TouPeriod,
};
use transitgrid_core::store::{ComponentKind, StoreError};
use transitgrid_core::Snapshot;

use crate::run::Run;
use crate::summary::HorizonSummary;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

fn json<T: Serialize>(status: StatusCode, body: &T) -> Response {
    let bytes = serde_json::to_vec(&Envelope { schema_version: SCHEMA_VERSION, body }).expect("response serializes");
    (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

#[derive(Debug, Serialize)]
struct ApiError {
    error: ErrorBody,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    code: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    valid_range: Option<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    valid_fields: Option<Vec<&'static str>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    valid_components: Option<Vec<String>>,
}

impl ErrorBody {
    fn new(code: &'static str, message: String) -> Self {
        Self { code, message, valid_range: None, valid_fields: None, valid_components: None }
    }
}

fn error(status: StatusCode, body: ErrorBody) -> Response {
    json(status, &ApiError { error: body })
}

#[derive(Debug, Serialize)]
struct FieldInfo {
    field: &'static str,
    unit: &'static str,
}

#[derive(Debug, Serialize)]
struct NodeInfo {
    id: NodeId,
    is_substation: bool,
    v_min_pu: f64,
    v_max_pu: f64,
}

#[derive(Debug, Serialize)]
struct LineInfo {
    id: transitgrid_core::scenario::LineId,
    from_node: NodeId,
    to_node: NodeId,
    r_pu: f64,
    x_pu: f64,
    i_max_pu: f64,
}

#[derive(Debug, Serialize)]
struct StationInfo {
    id: StationId,
    name: String,
    linked_node: NodeId,
    charger_rating_kw: f64,
    n_chargers: u32,
    capacity_kw: f64,
    power_factor: f64,
    layout_xy: [f64; 2],
}

#[derive(Debug, Serialize)]
struct RouteInfo {
    id: RouteId,
    /// Distinct charger stations in the order the route first visits them.
    stations: Vec<StationId>,
}

#[derive(Debug, Serialize)]
struct BebInfo {
    id: BebId,
    route_id: RouteId,
    capacity_kwh: f64,
    e_min_kwh: f64,
    e_max_kwh: f64,
    consumption_kwh_per_mile: f64,
}

#[derive(Debug, Serialize)]
struct StepLabel {
    t: usize,
    clock: String,
    tou_period: TouPeriod,
}

#[derive(Debug, Serialize)]
struct TariffInfo {
    steps: Vec<StepLabel>,
    demand_rate_usd_per_kw: f64,
    demand_interval_minutes: u32,
}

#[derive(Debug, Serialize)]
struct ScenarioView {
    name: String,
    fingerprint: String,
    policy: String,
    bases: PerUnitBases,
    grid: TimeGrid,
    counts: ScenarioCounts,
    nodes: Vec<NodeInfo>,
    lines: Vec<LineInfo>,
    stations: Vec<StationInfo>,
    coupling: Vec<CouplingLink>,
    roads: Vec<Road>,
    routes: Vec<RouteInfo>,
    bebs: Vec<BebInfo>,
    tariff: TariffInfo,
    series_fields: BTreeMap<ComponentKind, Vec<FieldInfo>>,
    units: BTreeMap<&'static str, &'static str>,
}

fn series_fields() -> BTreeMap<ComponentKind, Vec<FieldInfo>> {
    ComponentKind::ALL
        .into_iter()
        .map(|k| (k, k.fields().iter().map(|&(field, unit)| FieldInfo { field, unit }).collect()))
        .collect()
}

fn scenario_view(s: &Scenario, policy: &str) -> ScenarioView {
    let mut stations_of_route = Vec::new();
    for r in &s.routes {
        let mut seen = Vec::new();
        for st in r.stops.iter().filter_map(|v| v.station()) {
            if !seen.contains(&st) {
                seen.push(st);
            }
        }
        stations_of_route.push(RouteInfo { id: r.id, stations: seen });
    }
    ScenarioView {
        name: s.name.clone(),
        fingerprint: s.fingerprint(),
        policy: policy.to_string(),
        bases: s.bases,
        grid: s.grid,
        counts: s.counts(),
        nodes: s
            .nodes
            .iter()
            .map(|n| NodeInfo { id: n.id, is_substation: n.is_substation, v_min_pu: n.v_min, v_max_pu: n.v_max })
            .collect(),
        lines: s
            .lines
            .iter()
            .map(|l| LineInfo {
                id: l.id,
                from_node: l.from_node,
                to_node: l.to_node,
                r_pu: l.r_pu,
                x_pu: l.x_pu,
                i_max_pu: l.i_max_pu,
            })
            .collect(),
        stations: s
            .stations
            .iter()
            .map(|st| StationInfo {
                id: st.id,
                name: st.name.clone(),
                linked_node: st.linked_node,
                charger_rating_kw: st.charger_rating_kw,
                n_chargers: st.n_chargers,
                capacity_kw: st.capacity_kw(),
                power_factor: st.power_factor,
                layout_xy: st.layout_xy,
            })
            .collect(),
        coupling: s.coupling.clone(),
        roads: s.roads.clone(),
        routes: stations_of_route,
        bebs: s
            .bebs
            .iter()
            .map(|b| BebInfo {
                id: b.id,
                route_id: b.route_id,
                capacity_kwh: b.capacity_kwh,
                e_min_kwh: b.e_min_kwh,
                e_max_kwh: b.e_max_kwh,
                consumption_kwh_per_mile: b.consumption_kwh_per_mile,
            })
            .collect(),
        tariff: TariffInfo {
            steps: (0..s.grid.len())
                .map(|t| StepLabel {
                    t,
                    clock: s.grid.clock(t).expect("step inside horizon").to_string(),
                    tou_period: s.tariff.tou_period[t],
                })
                .collect(),
            demand_rate_usd_per_kw: s.tariff.demand_rate_per_kw,
            demand_interval_minutes: s.tariff.demand_interval_minutes,
        },
        series_fields: series_fields(),
        units: BTreeMap::from([
            ("v_min_pu", "pu"),
            ("v_max_pu", "pu"),
            ("r_pu", "pu"),
            ("x_pu", "pu"),
            ("i_max_pu", "pu"),
            ("charger_rating_kw", "kW"),
            ("capacity_kw", "kW"),
            ("layout_xy", "layout units"),
            ("length_miles", "mi"),
            ("capacity_kwh", "kWh"),
            ("e_min_kwh", "kWh"),
            ("e_max_kwh", "kWh"),
            ("power_factor", "ratio"),
            ("consumption_kwh_per_mile", "kWh/mi"),
            ("demand_rate_usd_per_kw", "$/kW"),
            ("bases.kv", "kV"),
            ("bases.mva", "MVA"),
        ]),
    }
}

#[derive(Debug, Serialize)]
struct SnapshotView<'a> {
    bases: PerUnitBases,
    units: BTreeMap<ComponentKind, Vec<FieldInfo>>,
    snapshot: &'a Snapshot,
}

#[derive(Debug, Serialize)]
struct SeriesView<'a> {
    component: &'a str,
    field: &'a str,
    unit: &'static str,
    bases: PerUnitBases,
    grid: TimeGrid,
    values: &'a [f64],
}

#[derive(Debug, Serialize)]
struct SummaryView<'a> {
    units: BTreeMap<&'static str, &'static str>,
    summary: &'a HorizonSummary,
}

/// Shared read-only state: the run plus the bodies that never change.
pub struct ApiState {
    run: Run,
    scenario_body: Vec<u8>,
}

impl ApiState {
    pub fn new(run: Run) -> Self {
        let view = scenario_view(&run.scenario, &run.stream.header.policy);
        let bytes = serde_json::to_vec(&Envelope { schema_version: SCHEMA_VERSION, body: &view })
            .expect("scenario view serializes");
        Self { run, scenario_body: bytes }
    }

    pub fn run(&self) -> &Run {
        &self.run
    }
}

pub fn router(run: Run) -> Router {
    let cors = CorsLayer::new().allow_origin(Any).allow_methods([Method::GET]).allow_headers(Any);
    Router::new()
        .route("/api/v1/scenario", get(get_scenario))
        .route("/api/v1/snapshots/{t}", get(get_snapshot))
        .route("/api/v1/series/{component}/{field}", get(get_series))
        .route("/api/v1/summary", get(get_summary))
        .fallback(not_found)
        .layer(cors)
        .with_state(Arc::new(ApiState::new(run)))
}

async fn get_scenario(State(state): State<Arc<ApiState>>) -> Response {
    let body = state.scenario_body.clone();
    (StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn get_snapshot(State(state): State<Arc<ApiState>>, Path(t): Path<String>) -> Response {
    let stream = &state.run.stream;
    let range = [0, stream.len().saturating_sub(1)];
    let Ok(t) = t.parse::<usize>() else {
        let mut body = ErrorBody::new("bad_request", format!("step {t:?} is not a non-negative integer"));
        body.valid_range = Some(range);
        return error(StatusCode::BAD_REQUEST, body);
    };
    match stream.snapshot_at(t) {
        Ok(snapshot) => {
            json(StatusCode::OK, &SnapshotView { bases: stream.header.bases, units: series_fields(), snapshot })
        }
        Err(e) => {
            let mut body = ErrorBody::new("not_found", format!("{e}; valid steps are {}..={}", range[0], range[1]));
            body.valid_range = Some(range);
            error(StatusCode::NOT_FOUND, body)
        }
    }
}

async fn get_series(State(state): State<Arc<ApiState>>, Path((component, field)): Path<(String, String)>) -> Response {
    let run = &state.run;
    match run.stream.series(&component, &field) {
        Ok(series) => json(
            StatusCode::OK,
            &SeriesView {
                component: &series.component,
                field: &series.field,
                unit: series.unit,
                bases: run.stream.header.bases,
                grid: run.stream.header.grid,
                values: &series.values,
            },
        ),
        Err(e) => {
            let mut body = ErrorBody::new("not_found", e.to_string());
            match e {
                StoreError::UnknownField { valid, .. } => body.valid_fields = Some(valid),
                _ => body.valid_components = Some(valid_components(&run.scenario)),
            }
            error(StatusCode::NOT_FOUND, body)
        }
    }
}

fn valid_components(s: &Scenario) -> Vec<String> {
    let c = s.counts();
    vec![
        format!("node:1..node:{}", c.nodes),
        format!("line:1..line:{}", c.lines),
        format!("station:1..station:{}", c.stations),
        format!("beb:1..beb:{}", c.bebs),
        "system".to_string(),
    ]
}

async fn get_summary(State(state): State<Arc<ApiState>>) -> Response {
    json(StatusCode::OK, &SummaryView { units: HorizonSummary::units(), summary: &state.run.summary })
}

async fn not_found() -> Response {
    error(
        StatusCode::NOT_FOUND,
        ErrorBody::new(
            "not_found",
            "unknown endpoint; available: /api/v1/scenario, /api/v1/snapshots/{t}, \
             /api/v1/series/{component}/{field}, /api/v1/summary"
                .to_string(),
        ),
    )
}
