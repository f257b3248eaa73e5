//! Deterministic multi-actor simulation: epoch orchestration over a
//! message bus connecting clients, the three share servers, the gate and
//! the central store.
//!
//! Every epoch runs fixed phases: EpochOpen broadcast; client delta
//! emission, share splitting and upload; acks; barrier; per-(view,
//! window) gating; central ingest plus completeness; replica pushes.
//! Within a phase, messages deliver sorted by (from, msg_id), and all
//! randomness is derived from (seed, structural label), so sequential and
//! concurrent schedulers produce byte-identical event logs.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::scenario::{Op, Scenario, ScenarioError, CENTRAL_USER};
use super::wire::{Envelope, Message};
use crate::central::{CentralError, CentralStore, CentralViewState, Completeness, QueryError, QueryOutput};
use crate::ivm::{delta_to_contributions, GroupKey, IvmError, UserContribState};
use crate::mpc::{
    gate_and_release, server_apply, split, split_i64, GateError, ServerError, ServerState, Upload,
};
use crate::pds::{self, ExportRecord, LocalStore, PdsError};
use crate::rng;
use crate::schema::catalog::SchemaCatalog;
use crate::schema::{validate, Violation};
use crate::value::{Bag, Row};

pub const GATE_ID: &str = "gate";
pub const CENTRAL_ID: &str = "central";
pub const ANALYST_ID: &str = "analyst";

pub fn server_id(index: usize) -> String {
    format!("server:{}", index + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheduler {
    #[default]
    Sequential,
    /// One thread per client between barriers; identical output.
    Concurrent,
}

#[derive(Debug, Clone, Error)]
pub enum SimError {
    #[error(transparent)]
    Pds(#[from] PdsError),
    #[error(transparent)]
    Ivm(#[from] IvmError),
    #[error(transparent)]
    Central(#[from] CentralError),
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error(transparent)]
    Gate(#[from] GateError),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("schema error")]
    Schema(Vec<Violation>),
    #[error("{0}")]
    Parse(#[from] crate::schema::ParseError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("snapshot error: {0}")]
    Snapshot(String),
}

/// Exactly three servers; clients register per centralized view.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub clients: Vec<String>,
    pub servers: [String; 3],
    pub central: String,
    pub registered: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub seed: u64,
    pub epoch_seconds: i64,
    pub noise_disabled: bool,
    pub drop_client_prob: f64,
    pub fault_seed: u64,
    pub scheduler: Scheduler,
}

#[derive(Debug, Clone)]
pub struct ClientActor {
    pub store: LocalStore,
    pub contrib: BTreeMap<String, UserContribState>,
    pub upload_seq: u64,
    pub replica_versions: BTreeMap<String, u64>,
}

impl ClientActor {
    pub fn new(store: LocalStore) -> ClientActor {
        ClientActor {
            store,
            contrib: BTreeMap::new(),
            upload_seq: 0,
            replica_versions: BTreeMap::new(),
        }
    }
}

pub struct World {
    pub catalog: SchemaCatalog,
    pub schema_source: String,
    pub topology: Topology,
    pub clients: BTreeMap<String, ClientActor>,
    pub servers: [ServerState; 3],
    pub central: CentralStore,
    pub log: Vec<Envelope>,
    pub cfg: RunConfig,
    /// Last completed epoch (0 before the first).
    pub epoch: i64,
    ops_by_epoch: BTreeMap<i64, Vec<Op>>,
    /// Cumulative distinct users whose uploads touched (view, window).
    reported: BTreeMap<(String, i64), BTreeSet<String>>,
}

impl World {
    pub fn new(
        schema_source: &str,
        catalog: SchemaCatalog,
        scenario: &Scenario,
        seed: u64,
        scheduler: Scheduler,
    ) -> World {
        let clients: BTreeMap<String, ClientActor> = scenario
            .users
            .iter()
            .map(|u| {
                (u.clone(), ClientActor::new(LocalStore::new(u.clone())))
            })
            .collect();
        let registered = scenario
            .registrations
            .iter()
            .map(|(u, vs)| (u.clone(), vs.iter().cloned().collect()))
            .collect();
        let mut ops_by_epoch: BTreeMap<i64, Vec<Op>> = BTreeMap::new();
        for op in &scenario.ops {
            ops_by_epoch.entry(op.epoch).or_default().push(op.clone());
        }
        World {
            central: CentralStore::new(&catalog),
            catalog,
            schema_source: schema_source.to_string(),
            topology: Topology {
                clients: scenario.users.clone(),
                servers: [server_id(0), server_id(1), server_id(2)],
                central: CENTRAL_ID.to_string(),
                registered,
            },
            clients,
            servers: [ServerState::new(0), ServerState::new(1), ServerState::new(2)],
            log: Vec::new(),
            cfg: RunConfig {
                seed,
                epoch_seconds: scenario.epoch_seconds,
                noise_disabled: scenario.noise_disabled,
                drop_client_prob: scenario.faults.drop_client_prob,
                fault_seed: scenario.faults.seed,
                scheduler,
            },
            epoch: 0,
            ops_by_epoch,
            reported: BTreeMap::new(),
        }
    }

    fn flush_phase(&mut self, epoch: i64, mut drafts: Vec<(String, String, Message)>) -> usize {
        let start = self.log.len();
        // Stable sort: per-sender order is preserved, delivery order is
        // (from, msg_id).
        drafts.sort_by(|a, b| a.0.cmp(&b.0));
        for (from, to, body) in drafts {
            let msg_id = self.log.len() as u64 + 1;
            self.log.push(Envelope {
                from,
                to,
                epoch,
                body,
                msg_id,
            });
        }
        start
    }

    pub fn is_dropped(&self, epoch: i64, user: &str) -> bool {
        if self.cfg.drop_client_prob <= 0.0 {
            return false;
        }
        let mut r = rng::derive_n(
            self.cfg.seed ^ self.cfg.fault_seed,
            &["fault", user],
            epoch,
        );
        r.gen::<f64>() < self.cfg.drop_client_prob
    }

    pub fn run(&mut self, epochs: i64) -> Result<(), SimError> {
        for _ in 0..epochs {
            self.run_epoch()?;
        }
        Ok(())
    }

    pub fn run_epoch(&mut self) -> Result<(), SimError> {
        let epoch = self.epoch + 1;
        let wallclock = epoch.saturating_mul(self.cfg.epoch_seconds);
        log::debug!("epoch {epoch} opening");

        // Phase 1: EpochOpen broadcast.
        let mut drafts = Vec::new();
        for user in &self.topology.clients {
            drafts.push((CENTRAL_ID.to_string(), user.clone(), Message::EpochOpen {}));
        }
        for s in 0..3 {
            drafts.push((CENTRAL_ID.to_string(), server_id(s), Message::EpochOpen {}));
        }
        drafts.push((CENTRAL_ID.to_string(), GATE_ID.to_string(), Message::EpochOpen {}));
        self.flush_phase(epoch, drafts);

        // Local updates land before deltas are computed. A dropped client
        // still updates its own store; it just skips the protocol round.
        if let Some(ops) = self.ops_by_epoch.get(&epoch).cloned() {
            for op in ops {
                if op.user == CENTRAL_USER {
                    self.central
                        .apply_table_update(&self.catalog, &op.table, op.op, op.row)?;
                } else if let Some(actor) = self.clients.get_mut(&op.user) {
                    pds::apply_update(&mut actor.store, &self.catalog, &op.table, op.op, op.row)?;
                }
            }
        }

        // Phases 2-3: per-client delta emission, share upload, ack.
        let dropped: BTreeSet<String> = self
            .topology
            .clients
            .iter()
            .filter(|u| self.is_dropped(epoch, u))
            .cloned()
            .collect();
        let streams: Vec<(String, String)> = {
            let mut s: Vec<(String, String)> = self
                .catalog
                .export_streams()
                .iter()
                .map(|(d, c)| (d.name.clone(), c.name.clone()))
                .collect();
            s.sort_by(|a, b| a.1.cmp(&b.1));
            s
        };

        let seed = self.cfg.seed;
        let catalog = &self.catalog;
        let registered = &self.topology.registered;
        let mut results: Vec<(String, Result<Vec<(String, Message)>, SimError>)> =
            match self.cfg.scheduler {
                Scheduler::Sequential => self
                    .clients
                    .iter_mut()
                    .filter(|(u, _)| !dropped.contains(*u))
                    .map(|(user, actor)| {
                        let r = client_work(
                            user, actor, catalog, &streams, registered, seed, epoch, wallclock,
                        );
                        (user.clone(), r)
                    })
                    .collect(),
                Scheduler::Concurrent => {
                    let mut collected = Vec::new();
                    std::thread::scope(|scope| {
                        let handles: Vec<_> = self
                            .clients
                            .iter_mut()
                            .filter(|(u, _)| !dropped.contains(*u))
                            .map(|(user, actor)| {
                                let streams = &streams;
                                scope.spawn(move || {
                                    let r = client_work(
                                        user, actor, catalog, streams, registered, seed, epoch,
                                        wallclock,
                                    );
                                    (user.clone(), r)
                                })
                            })
                            .collect();
                        for h in handles {
                            collected.push(h.join().expect("client actor panicked"));
                        }
                    });
                    collected
                }
            };
        results.sort_by(|a, b| a.0.cmp(&b.0));

        let mut drafts = Vec::new();
        for (user, result) in results {
            for (to, msg) in result? {
                drafts.push((user.clone(), to, msg));
            }
        }
        let phase_start = self.flush_phase(epoch, drafts);

        // Barrier: deliver uploads to servers in log order.
        for i in phase_start..self.log.len() {
            let env = self.log[i].clone();
            if let Message::Upload(upload) = &env.body {
                let idx = self
                    .topology
                    .servers
                    .iter()
                    .position(|s| *s == env.to)
                    .expect("uploads address share servers");
                server_apply(&mut self.servers[idx], upload)?;
                if env.from != CENTRAL_USER {
                    self.reported
                        .entry((upload.view.clone(), upload.window_id))
                        .or_default()
                        .insert(env.from.clone());
                }
            }
        }

        // Phase 5a: servers reveal cumulative count shares to the gate.
        let touched: BTreeSet<(String, i64)> = self.servers[0].touched_windows(epoch);
        let mut drafts = Vec::new();
        for (s, server) in self.servers.iter().enumerate() {
            for (view, window) in &touched {
                for group in server.touched_groups(epoch, view, *window) {
                    let key = (view.clone(), *window, group.clone());
                    let count = server.acc.get(&key).map(|e| e.count).unwrap_or(0);
                    drafts.push((
                        server_id(s),
                        GATE_ID.to_string(),
                        Message::CountShares {
                            view: view.clone(),
                            window: *window,
                            group_key_b64: b64(&group),
                            share: count,
                        },
                    ));
                }
            }
        }
        self.flush_phase(epoch, drafts);

        // Phase 5b: gate decisions and releases.
        let mut gate_rng = rng::derive_n(self.cfg.seed, &["noise"], epoch);
        let mut drafts = Vec::new();
        let mut releases = Vec::new();
        for (view_name, window) in &touched {
            let view = self
                .catalog
                .view(view_name)
                .expect("touched views exist in the catalog");
            let k = view.effective_min_group();
            let noise = if self.cfg.noise_disabled {
                None
            } else {
                view.options.noise
            };
            let outcome =
                gate_and_release(&self.servers, view, *window, epoch, k, noise, &mut gate_rng)?;
            for d in &outcome.decisions {
                drafts.push((
                    GATE_ID.to_string(),
                    CENTRAL_ID.to_string(),
                    Message::GateDecision {
                        view: d.view.clone(),
                        window: d.window_id,
                        group_key_b64: d.group.to_b64(),
                        revealed_count: d.revealed_count,
                        released: d.released,
                    },
                ));
            }
            for r in outcome.released {
                drafts.push((
                    GATE_ID.to_string(),
                    CENTRAL_ID.to_string(),
                    Message::Release {
                        view: r.view.clone(),
                        window: r.window_id,
                        group_key_b64: r.group.to_b64(),
                        values: r.values.clone(),
                    },
                ));
                releases.push(r);
            }
        }
        self.flush_phase(epoch, drafts);

        // Phase 6: central ingest and completeness statistics.
        for r in &releases {
            self.central.ingest_release(r, epoch)?;
        }
        for (view, window) in &touched {
            let reporting = self
                .reported
                .get(&(view.clone(), *window))
                .map(|s| s.len() as u64)
                .unwrap_or(0);
            let registered_users = self
                .topology
                .registered
                .values()
                .filter(|vs| vs.contains(view))
                .count() as u64;
            self.central
                .record_completeness(view, *window, reporting, registered_users)?;
        }

        // Phase 7: replica pushes to clients that lag the current version.
        let mut drafts = Vec::new();
        let tables: Vec<String> = self.central.replicated.keys().cloned().collect();
        for table in &tables {
            let (version, rows) = self
                .central
                .build_replica_push(table)
                .expect("replicated table exists");
            if version == 0 {
                continue;
            }
            for user in &self.topology.clients {
                if dropped.contains(user) {
                    continue;
                }
                let actor = &self.clients[user];
                if actor.replica_versions.get(table).copied().unwrap_or(0) != version {
                    drafts.push((
                        CENTRAL_ID.to_string(),
                        user.clone(),
                        Message::ReplicaPush {
                            table: table.clone(),
                            version,
                            rows: rows.clone(),
                        },
                    ));
                }
            }
        }
        let push_start = self.flush_phase(epoch, drafts);
        for i in push_start..self.log.len() {
            let env = self.log[i].clone();
            if let Message::ReplicaPush { table, version, rows } = &env.body {
                let actor = self.clients.get_mut(&env.to).expect("push targets clients");
                let last = actor.replica_versions.get(table).copied().unwrap_or(0);
                if *version > last {
                    let bag: Bag = rows.iter().map(|r| (r.clone(), 1)).collect();
                    actor.store.replace_table(table, bag);
                    actor.replica_versions.insert(table.clone(), *version);
                }
            }
        }

        self.epoch = epoch;
        log::info!(
            "epoch {epoch} closed: {} releases, {} dropped clients",
            releases.len(),
            dropped.len()
        );
        Ok(())
    }

    /// Analyst query over the bus: logs the Query and QueryResult
    /// envelopes and returns the result.
    pub fn submit_query(&mut self, sql: &str) -> Result<QueryOutput, QueryError> {
        let epoch = self.epoch;
        self.flush_phase(
            epoch,
            vec![(
                ANALYST_ID.to_string(),
                CENTRAL_ID.to_string(),
                Message::Query {
                    sql: sql.to_string(),
                },
            )],
        );
        let result = crate::central::query_central(&self.central, &self.catalog, sql)?;
        self.flush_phase(
            epoch,
            vec![(
                CENTRAL_ID.to_string(),
                ANALYST_ID.to_string(),
                Message::QueryResult {
                    rows: result.rows.clone(),
                    completeness: result.completeness,
                },
            )],
        );
        Ok(result)
    }

    pub fn event_log_text(&self) -> String {
        let mut out = String::new();
        for env in &self.log {
            out.push_str(&env.to_line());
            out.push('\n');
        }
        out
    }

    pub fn view_state(&self, view: &str) -> Option<&CentralViewState> {
        self.central.views.get(view)
    }
}

fn b64(bytes: &[u8]) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

/// One client's phase-2/3 work: emit deltas per export stream, convert to
/// contributions, split shares, and produce Upload and Ack messages.
/// Deterministic given (seed, user, epoch).
#[allow(clippy::too_many_arguments)]
fn client_work(
    user: &str,
    actor: &mut ClientActor,
    catalog: &SchemaCatalog,
    streams: &[(String, String)],
    registered: &BTreeMap<String, BTreeSet<String>>,
    seed: u64,
    epoch: i64,
    wallclock: i64,
) -> Result<Vec<(String, Message)>, SimError> {
    let mut rng = rng::derive_n(seed, &["shares", user], epoch);
    let mut out = Vec::new();
    let mut acked_views = Vec::new();
    for (dview_name, cview_name) in streams {
        let is_registered = registered
            .get(user)
            .map(|vs| vs.contains(cview_name))
            .unwrap_or(false);
        if !is_registered {
            continue;
        }
        let dview = catalog.view(dview_name).expect("stream views exist");
        let cview = catalog.view(cview_name).expect("stream views exist");
        let delta = pds::emit_delta(
            &mut actor.store,
            dview,
            cview.options.window.as_ref(),
            epoch,
            wallclock,
        )?;
        if delta.is_empty() {
            continue;
        }
        let state = actor.contrib.entry(cview_name.clone()).or_default();
        let contributions = delta_to_contributions(&delta, cview, state)?;
        if contributions.is_empty() {
            continue;
        }
        acked_views.push(cview_name.clone());
        for c in contributions {
            let upload_id = format!("{user}/{epoch}/{}", actor.upload_seq);
            actor.upload_seq += 1;
            let slot_triples: Vec<_> = c
                .agg_values
                .iter()
                .map(|v| split_i64(*v, &mut rng))
                .collect();
            let count_triple = split(c.first_touch as u64, &mut rng);
            for j in 0..3usize {
                out.push((
                    server_id(j),
                    Message::Upload(Upload {
                        epoch,
                        upload_id: upload_id.clone(),
                        view: c.view.clone(),
                        window_id: c.window_id,
                        group_key_b64: c.group.to_b64(),
                        share_index: j as u8,
                        agg_shares: slot_triples.iter().map(|t| t.share(j)).collect(),
                        count_share: count_triple.share(j),
                        first_touch_declared: c.first_touch,
                    }),
                ));
            }
        }
    }
    out.push((
        CENTRAL_ID.to_string(),
        Message::Ack { views: acked_views },
    ));
    Ok(out)
}

/// Rebuilds the upload messages a client transmitted, from its export log
/// alone (plus the run seed). Byte-identical to the original run.
pub fn replay_uploads(
    catalog: &SchemaCatalog,
    user: &str,
    export_log: &[ExportRecord],
    seed: u64,
) -> Result<Vec<(i64, Upload)>, SimError> {
    let mut contrib: BTreeMap<String, UserContribState> = BTreeMap::new();
    let mut upload_seq = 0u64;
    let mut out = Vec::new();
    let mut i = 0usize;
    while i < export_log.len() {
        let epoch = export_log[i].epoch;
        let mut rng = rng::derive_n(seed, &["shares", user], epoch);
        while i < export_log.len() && export_log[i].epoch == epoch {
            let rec = &export_log[i];
            i += 1;
            let consumer = catalog
                .export_streams()
                .iter()
                .find(|(d, _)| d.name == rec.view)
                .map(|(_, c)| c.name.clone());
            let Some(cview_name) = consumer else { continue };
            let cview = catalog.view(&cview_name).expect("stream views exist");
            let state = contrib.entry(cview_name.clone()).or_default();
            let contributions = delta_to_contributions(&rec.delta, cview, state)?;
            for c in contributions {
                let upload_id = format!("{user}/{epoch}/{upload_seq}");
                upload_seq += 1;
                let slot_triples: Vec<_> = c
                    .agg_values
                    .iter()
                    .map(|v| split_i64(*v, &mut rng))
                    .collect();
                let count_triple = split(c.first_touch as u64, &mut rng);
                for j in 0..3usize {
                    out.push((
                        epoch,
                        Upload {
                            epoch,
                            upload_id: upload_id.clone(),
                            view: c.view.clone(),
                            window_id: c.window_id,
                            group_key_b64: c.group.to_b64(),
                            share_index: j as u8,
                            agg_shares: slot_triples.iter().map(|t| t.share(j)).collect(),
                            count_share: count_triple.share(j),
                            first_touch_declared: c.first_touch,
                        },
                    ));
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ClientDoc {
    store: LocalStore,
    contrib: Vec<(String, UserContribState)>,
    upload_seq: u64,
    replica_versions: BTreeMap<String, u64>,
}

#[derive(Serialize, Deserialize)]
struct AccDoc {
    view: String,
    window_id: i64,
    group_key_b64: String,
    #[serde(with = "crate::value::wire_u64_vec")]
    agg_shares: Vec<u64>,
    #[serde(with = "crate::value::wire_u64")]
    count_share: u64,
}

#[derive(Serialize, Deserialize)]
struct EpochLogDoc {
    epoch: i64,
    applied: Vec<String>,
    touched: Vec<(String, i64, String)>,
}

#[derive(Serialize, Deserialize)]
struct ServerDoc {
    index: usize,
    acc: Vec<AccDoc>,
    epoch_log: Vec<EpochLogDoc>,
}

#[derive(Serialize, Deserialize)]
struct CentralRowDoc {
    window_id: i64,
    group_key_b64: String,
    values: Vec<crate::value::Scalar>,
    released_at_epoch: i64,
}

#[derive(Serialize, Deserialize)]
struct ViewStateDoc {
    view: String,
    rows: Vec<CentralRowDoc>,
    completeness: Vec<(i64, Completeness)>,
    last_epoch_applied: i64,
    #[serde(default)]
    max_window_seen: Option<i64>,
}

#[derive(Serialize, Deserialize)]
struct CentralDoc {
    views: Vec<ViewStateDoc>,
    tables: BTreeMap<String, Vec<Row>>,
    replicated: Vec<(String, u64, Vec<Row>)>,
}

#[derive(Serialize, Deserialize)]
struct ReportedDoc {
    view: String,
    window_id: i64,
    users: Vec<String>,
}

/// World snapshot document (format 1). The catalog is rebuilt from the
/// embedded schema source on load.
#[derive(Serialize, Deserialize)]
pub struct WorldSnapshot {
    format: u32,
    seed: u64,
    epoch: i64,
    epoch_seconds: i64,
    noise_disabled: bool,
    drop_client_prob: f64,
    fault_seed: u64,
    schema_sql: String,
    clients: Vec<ClientDoc>,
    servers: Vec<ServerDoc>,
    central: CentralDoc,
    reported: Vec<ReportedDoc>,
}

impl World {
    pub fn to_snapshot(&self) -> WorldSnapshot {
        let clients = self
            .clients
            .values()
            .map(|a| ClientDoc {
                store: a.store.clone(),
                contrib: a.contrib.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
                upload_seq: a.upload_seq,
                replica_versions: a.replica_versions.clone(),
            })
            .collect();
        let servers = self
            .servers
            .iter()
            .map(|s| ServerDoc {
                index: s.index,
                acc: s
                    .acc
                    .iter()
                    .map(|((view, window_id, group), e)| AccDoc {
                        view: view.clone(),
                        window_id: *window_id,
                        group_key_b64: b64(group),
                        agg_shares: e.agg.clone(),
                        count_share: e.count,
                    })
                    .collect(),
                epoch_log: s
                    .epoch_log
                    .iter()
                    .map(|(epoch, log)| EpochLogDoc {
                        epoch: *epoch,
                        applied: log.applied.iter().cloned().collect(),
                        touched: log
                            .touched
                            .iter()
                            .map(|(v, w, g)| (v.clone(), *w, b64(g)))
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        let central = CentralDoc {
            views: self
                .central
                .views
                .values()
                .map(|v| ViewStateDoc {
                    view: v.view.clone(),
                    rows: v
                        .rows
                        .values()
                        .map(|r| CentralRowDoc {
                            window_id: r.window_id,
                            group_key_b64: r.group.to_b64(),
                            values: r.values.clone(),
                            released_at_epoch: r.released_at_epoch,
                        })
                        .collect(),
                    completeness: v.completeness.iter().map(|(k, c)| (*k, *c)).collect(),
                    last_epoch_applied: v.last_epoch_applied,
                    max_window_seen: v.max_window_seen,
                })
                .collect(),
            tables: self
                .central
                .tables
                .iter()
                .map(|(k, bag)| {
                    let mut rows = Vec::new();
                    for (row, w) in bag.iter() {
                        for _ in 0..w.max(0) {
                            rows.push(row.clone());
                        }
                    }
                    (k.clone(), rows)
                })
                .collect(),
            replicated: self
                .central
                .replicated
                .values()
                .map(|r| {
                    let mut rows = Vec::new();
                    for (row, w) in r.rows.iter() {
                        for _ in 0..w.max(0) {
                            rows.push(row.clone());
                        }
                    }
                    (r.table.clone(), r.version, rows)
                })
                .collect(),
        };
        WorldSnapshot {
            format: 1,
            seed: self.cfg.seed,
            epoch: self.epoch,
            epoch_seconds: self.cfg.epoch_seconds,
            noise_disabled: self.cfg.noise_disabled,
            drop_client_prob: self.cfg.drop_client_prob,
            fault_seed: self.cfg.fault_seed,
            schema_sql: self.schema_source.clone(),
            clients,
            servers,
            central,
            reported: self
                .reported
                .iter()
                .map(|((view, window_id), users)| ReportedDoc {
                    view: view.clone(),
                    window_id: *window_id,
                    users: users.iter().cloned().collect(),
                })
                .collect(),
        }
    }

    pub fn snapshot_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_snapshot()).expect("snapshot serializes")
    }

    pub fn from_snapshot_json(text: &str) -> Result<World, RunError> {
        let doc: WorldSnapshot =
            serde_json::from_str(text).map_err(|e| RunError::Snapshot(e.to_string()))?;
        if doc.format != 1 {
            return Err(RunError::Snapshot(format!(
                "unsupported snapshot format {}",
                doc.format
            )));
        }
        let statements = crate::schema::parse_ddl(&doc.schema_sql)?;
        let catalog = validate(&statements).map_err(RunError::Schema)?;

        let mut clients = BTreeMap::new();
        let mut topo_clients = Vec::new();
        for c in doc.clients {
            let user = c.store.user_id.clone();
            topo_clients.push(user.clone());
            clients.insert(
                user,
                ClientActor {
                    store: c.store,
                    contrib: c.contrib.into_iter().collect(),
                    upload_seq: c.upload_seq,
                    replica_versions: c.replica_versions,
                },
            );
        }

        let mut servers = [ServerState::new(0), ServerState::new(1), ServerState::new(2)];
        for s in doc.servers {
            if s.index >= 3 {
                return Err(RunError::Snapshot("server index out of range".into()));
            }
            let state = &mut servers[s.index];
            for acc in s.acc {
                let group = decode_b64(&acc.group_key_b64)?;
                state.acc.insert(
                    (acc.view, acc.window_id, group),
                    crate::mpc::server::AccEntry {
                        agg: acc.agg_shares,
                        count: acc.count_share,
                    },
                );
            }
            for log in s.epoch_log {
                let mut touched = BTreeSet::new();
                for (v, w, g) in log.touched {
                    touched.insert((v, w, decode_b64(&g)?));
                }
                state.epoch_log.insert(
                    log.epoch,
                    crate::mpc::server::EpochLog {
                        applied: log.applied.into_iter().collect(),
                        touched,
                    },
                );
            }
        }

        let mut central = CentralStore::new(&catalog);
        for v in doc.central.views {
            let Some(state) = central.views.get_mut(&v.view) else {
                return Err(RunError::Snapshot(format!("unknown view {}", v.view)));
            };
            for r in v.rows {
                let group = GroupKey::from_b64(&r.group_key_b64)
                    .map_err(|e| RunError::Snapshot(e.to_string()))?;
                state.rows.insert(
                    (r.window_id, group.clone()),
                    crate::central::CentralViewRow {
                        group,
                        window_id: r.window_id,
                        values: r.values,
                        released_at_epoch: r.released_at_epoch,
                    },
                );
            }
            state.completeness = v.completeness.into_iter().collect();
            state.last_epoch_applied = v.last_epoch_applied;
            state.max_window_seen = v.max_window_seen;
        }
        for (name, rows) in doc.central.tables {
            if let Some(bag) = central.tables.get_mut(&name) {
                *bag = rows.into_iter().map(|r| (r, 1)).collect();
            }
        }
        for (name, version, rows) in doc.central.replicated {
            if let Some(state) = central.replicated.get_mut(&name) {
                state.version = version;
                state.rows = rows.into_iter().map(|r| (r, 1)).collect();
            }
        }

        let registered: BTreeMap<String, BTreeSet<String>> = topo_clients
            .iter()
            .map(|u| {
                (
                    u.clone(),
                    catalog.centralized_views().map(|v| v.name.clone()).collect(),
                )
            })
            .collect();

        Ok(World {
            catalog,
            schema_source: doc.schema_sql,
            topology: Topology {
                clients: topo_clients,
                servers: [server_id(0), server_id(1), server_id(2)],
                central: CENTRAL_ID.to_string(),
                registered,
            },
            clients,
            servers,
            central,
            log: Vec::new(),
            cfg: RunConfig {
                seed: doc.seed,
                epoch_seconds: doc.epoch_seconds,
                noise_disabled: doc.noise_disabled,
                drop_client_prob: doc.drop_client_prob,
                fault_seed: doc.fault_seed,
                scheduler: Scheduler::Sequential,
            },
            epoch: doc.epoch,
            ops_by_epoch: BTreeMap::new(),
            reported: doc
                .reported
                .into_iter()
                .map(|r| ((r.view, r.window_id), r.users.into_iter().collect()))
                .collect(),
        })
    }
}

fn decode_b64(s: &str) -> Result<Vec<u8>, RunError> {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD
        .decode(s)
        .map_err(|e| RunError::Snapshot(e.to_string()))
}

/// Parses, validates and runs a scenario end to end.
pub fn run_scenario(
    schema_sql: &str,
    scenario_file: &super::scenario::ScenarioFile,
    epochs: i64,
    seed: u64,
    scheduler: Scheduler,
) -> Result<World, RunError> {
    let statements = crate::schema::parse_ddl(schema_sql)?;
    let catalog = validate(&statements).map_err(RunError::Schema)?;
    let scenario = scenario_file.load(&catalog, epochs, seed)?;
    let mut world = World::new(schema_sql, catalog, &scenario, seed, scheduler);
    world.run(epochs)?;
    Ok(world)
}
