//! Scenario files: user population, scripted or generated workload,
//! fault plan, and run options. Generators expand into a concrete
//! scripted op list at load time, as a pure function of the seed.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pds::UpdateOp;
use crate::rng;
use crate::schema::catalog::{SchemaCatalog, TablePlacement};
use crate::value::{DType, Row, Scalar};

pub const CENTRAL_USER: &str = "central";

#[derive(Debug, Clone, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("scenario references unknown table {0}")]
    UnknownTable(String),
    #[error("scenario references unknown user {0}")]
    UnknownUser(String),
    #[error("scenario references unknown view {0}")]
    UnknownView(String),
    #[error("op at epoch {0} has negative epoch")]
    NegativeEpoch(i64),
    #[error("bad row value for table {table}: {detail}")]
    BadValue { table: String, detail: String },
    #[error("generator misses a value for column {0}")]
    MissingColumnGen(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum UsersSpec {
    Count(u32),
    List(Vec<String>),
}

impl Default for UsersSpec {
    fn default() -> Self {
        UsersSpec::Count(0)
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize, Serialize)]
pub struct FaultPlan {
    #[serde(default)]
    pub drop_client_prob: f64,
    /// Folded into the run seed for the drop schedule.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ScriptOp {
    pub epoch: i64,
    pub user: String,
    pub table: String,
    pub op: String,
    pub row: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ColumnGen {
    /// {"int_uniform": [lo, hi]} (inclusive), {"float_uniform": [lo, hi]},
    /// {"choice": [...]}, {"const": value} or "ts_in_epoch".
    Named(String),
    Spec(BTreeMap<String, serde_json::Value>),
}

#[derive(Debug, Clone, Deserialize)]
pub struct GeneratorSpec {
    pub table: String,
    pub rows_per_user_per_epoch: u32,
    #[serde(default)]
    pub delete_prob: f64,
    pub columns: BTreeMap<String, ColumnGen>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct WorkloadSpec {
    #[serde(default)]
    pub script: Vec<ScriptOp>,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ScenarioFile {
    pub users: UsersSpec,
    #[serde(default = "default_epoch_seconds")]
    pub epoch_seconds: i64,
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub faults: FaultPlan,
    /// "disable" suppresses declared noise for oracle runs.
    #[serde(default)]
    pub noise_override: Option<String>,
    /// user -> centralized views; omitted users register for all views.
    #[serde(default)]
    pub registrations: Option<BTreeMap<String, Vec<String>>>,
}

fn default_epoch_seconds() -> i64 {
    86400
}

/// A concrete update op, after generator expansion and row coercion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Op {
    pub epoch: i64,
    pub user: String,
    pub table: String,
    pub op: UpdateOp,
    pub row: Row,
}

/// A loaded, validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub users: Vec<String>,
    pub epoch_seconds: i64,
    pub ops: Vec<Op>,
    pub faults: FaultPlan,
    pub noise_disabled: bool,
    pub registrations: BTreeMap<String, Vec<String>>,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<ScenarioFile, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    /// Expands the workload into a concrete scenario for `epochs` epochs.
    pub fn load(
        &self,
        catalog: &SchemaCatalog,
        epochs: i64,
        seed: u64,
    ) -> Result<Scenario, ScenarioError> {
        let users = match &self.users {
            UsersSpec::Count(n) => (1..=*n).map(|i| format!("u{i:02}")).collect(),
            UsersSpec::List(names) => names.clone(),
        };

        let mut registrations: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let all_views: Vec<String> = catalog.centralized_views().map(|v| v.name.clone()).collect();
        for u in &users {
            registrations.insert(u.clone(), all_views.clone());
        }
        if let Some(custom) = &self.registrations {
            for (user, views) in custom {
                if !users.contains(user) {
                    return Err(ScenarioError::UnknownUser(user.clone()));
                }
                for v in views {
                    if !all_views.contains(v) {
                        return Err(ScenarioError::UnknownView(v.clone()));
                    }
                }
                registrations.insert(user.clone(), views.clone());
            }
        }

        let mut ops = Vec::new();
        for s in &self.workload.script {
            ops.push(coerce_op(catalog, &users, s)?);
        }
        if let Some(gen) = &self.workload.generator {
            ops.extend(expand_generator(
                catalog,
                &users,
                gen,
                epochs,
                self.epoch_seconds,
                seed,
            )?);
        }
        ops.sort_by(|a, b| (a.epoch, &a.user).cmp(&(b.epoch, &b.user)));

        Ok(Scenario {
            users,
            epoch_seconds: self.epoch_seconds,
            ops,
            faults: self.faults,
            noise_disabled: self.noise_override.as_deref() == Some("disable"),
            registrations,
        })
    }
}

fn coerce_op(
    catalog: &SchemaCatalog,
    users: &[String],
    s: &ScriptOp,
) -> Result<Op, ScenarioError> {
    if s.epoch < 0 {
        return Err(ScenarioError::NegativeEpoch(s.epoch));
    }
    let table = catalog
        .table(&s.table)
        .ok_or_else(|| ScenarioError::UnknownTable(s.table.clone()))?;
    let central_op = s.user == CENTRAL_USER;
    if central_op {
        if table.placement == TablePlacement::Decentralized {
            return Err(ScenarioError::BadValue {
                table: s.table.clone(),
                detail: "central ops target CENTRALIZED or REPLICATED tables".into(),
            });
        }
    } else {
        if !users.contains(&s.user) {
            return Err(ScenarioError::UnknownUser(s.user.clone()));
        }
        if table.placement != TablePlacement::Decentralized {
            return Err(ScenarioError::BadValue {
                table: s.table.clone(),
                detail: "user ops target DECENTRALIZED tables".into(),
            });
        }
    }
    let op = match s.op.to_ascii_uppercase().as_str() {
        "INSERT" => UpdateOp::Insert,
        "DELETE" => UpdateOp::Delete,
        other => {
            return Err(ScenarioError::BadValue {
                table: s.table.clone(),
                detail: format!("unknown op {other}"),
            });
        }
    };
    if s.row.len() != table.columns.len() {
        return Err(ScenarioError::BadValue {
            table: s.table.clone(),
            detail: format!(
                "expected {} values, got {}",
                table.columns.len(),
                s.row.len()
            ),
        });
    }
    let mut values = Vec::new();
    for (v, c) in s.row.iter().zip(&table.columns) {
        values.push(coerce_value(v, c.dtype).ok_or_else(|| ScenarioError::BadValue {
            table: s.table.clone(),
            detail: format!("column {} expects {}", c.name, c.dtype),
        })?);
    }
    Ok(Op {
        epoch: s.epoch,
        user: s.user.clone(),
        table: s.table.clone(),
        op,
        row: Row::new(values),
    })
}

fn coerce_value(v: &serde_json::Value, dtype: DType) -> Option<Scalar> {
    use serde_json::Value;
    Some(match (v, dtype) {
        (Value::Number(n), DType::Int64) => Scalar::Int(n.as_i64()?),
        (Value::Number(n), DType::Timestamp) => Scalar::Timestamp(n.as_i64()?),
        (Value::Number(n), DType::Float64) => Scalar::Float(n.as_f64()?),
        (Value::String(s), DType::Text) => Scalar::Text(s.clone()),
        (Value::Bool(b), DType::Bool) => Scalar::Bool(*b),
        _ => return None,
    })
}

fn expand_generator(
    catalog: &SchemaCatalog,
    users: &[String],
    gen: &GeneratorSpec,
    epochs: i64,
    epoch_seconds: i64,
    seed: u64,
) -> Result<Vec<Op>, ScenarioError> {
    let table = catalog
        .table(&gen.table)
        .ok_or_else(|| ScenarioError::UnknownTable(gen.table.clone()))?;
    if table.placement != TablePlacement::Decentralized {
        return Err(ScenarioError::BadValue {
            table: gen.table.clone(),
            detail: "generator targets a DECENTRALIZED table".into(),
        });
    }
    for c in &table.columns {
        if !gen.columns.contains_key(&c.name) {
            return Err(ScenarioError::MissingColumnGen(c.name.clone()));
        }
    }

    let mut ops = Vec::new();
    // Live multiset per user, tracked so deletes always name present rows.
    let mut live: BTreeMap<&str, Vec<Row>> = BTreeMap::new();
    for epoch in 1..=epochs {
        let wallclock = epoch * epoch_seconds;
        for user in users {
            let mut r = rng::derive_n(seed, &["gen", user], epoch);
            let rows = live.entry(user).or_default();
            if gen.delete_prob > 0.0 && !rows.is_empty() && r.gen::<f64>() < gen.delete_prob {
                let idx = r.gen_range(0..rows.len());
                let row = rows.remove(idx);
                ops.push(Op {
                    epoch,
                    user: user.clone(),
                    table: gen.table.clone(),
                    op: UpdateOp::Delete,
                    row,
                });
            }
            for _ in 0..gen.rows_per_user_per_epoch {
                let mut values = Vec::new();
                for c in &table.columns {
                    let spec = &gen.columns[&c.name];
                    values.push(gen_value(spec, c.dtype, wallclock, epoch_seconds, &mut r)?);
                }
                let row = Row::new(values);
                rows.push(row.clone());
                ops.push(Op {
                    epoch,
                    user: user.clone(),
                    table: gen.table.clone(),
                    op: UpdateOp::Insert,
                    row,
                });
            }
        }
    }
    Ok(ops)
}

fn gen_value(
    spec: &ColumnGen,
    dtype: DType,
    wallclock: i64,
    epoch_seconds: i64,
    r: &mut impl Rng,
) -> Result<Scalar, ScenarioError> {
    let bad = |detail: &str| ScenarioError::BadValue {
        table: "generator".into(),
        detail: detail.to_string(),
    };
    match spec {
        ColumnGen::Named(name) if name == "ts_in_epoch" => {
            if dtype != DType::Timestamp {
                return Err(bad("ts_in_epoch requires a TIMESTAMP column"));
            }
            Ok(Scalar::Timestamp(wallclock + r.gen_range(0..epoch_seconds)))
        }
        ColumnGen::Named(other) => Err(bad(&format!("unknown generator {other}"))),
        ColumnGen::Spec(map) => {
            let (kind, arg) = map.iter().next().ok_or_else(|| bad("empty generator"))?;
            match kind.as_str() {
                "int_uniform" => {
                    let bounds: Vec<i64> = parse_pair(arg).ok_or_else(|| bad("int_uniform"))?;
                    let v = r.gen_range(bounds[0]..=bounds[1]);
                    match dtype {
                        DType::Int64 => Ok(Scalar::Int(v)),
                        DType::Timestamp => Ok(Scalar::Timestamp(v)),
                        _ => Err(bad("int_uniform on non-integer column")),
                    }
                }
                "float_uniform" => {
                    let bounds: Vec<f64> = parse_pair(arg).ok_or_else(|| bad("float_uniform"))?;
                    if dtype != DType::Float64 {
                        return Err(bad("float_uniform on non-float column"));
                    }
                    Ok(Scalar::Float(r.gen_range(bounds[0]..bounds[1])))
                }
                "choice" => {
                    let opts = arg.as_array().ok_or_else(|| bad("choice"))?;
                    if opts.is_empty() {
                        return Err(bad("empty choice"));
                    }
                    let v = &opts[r.gen_range(0..opts.len())];
                    coerce_value(v, dtype).ok_or_else(|| bad("choice value type"))
                }
                "const" => coerce_value(arg, dtype).ok_or_else(|| bad("const value type")),
                other => Err(bad(&format!("unknown generator {other}"))),
            }
        }
    }
}

fn parse_pair<T: serde::de::DeserializeOwned>(v: &serde_json::Value) -> Option<Vec<T>> {
    let out: Vec<T> = serde_json::from_value(v.clone()).ok()?;
    if out.len() == 2 {
        Some(out)
    } else {
        None
    }
}
