//! TOML experiment files. Every `machine` key is optional: the file is laid
//! over a preset (`machine.preset`, default `server`) key by key, so a config
//! may override a single cache parameter.

use std::path::Path;

use daxsim_core::{ExperimentConfig, MachineConfig};
use toml::{Table, Value};

use crate::error::{Error, Result};

/// Named machine presets.
pub fn preset(name: &str) -> Option<MachineConfig> {
    match name {
        "server" => Some(MachineConfig::default()),
        "desk" => Some(MachineConfig::desk()),
        _ => None,
    }
}

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Read { path: path.into(), source })?;
    parse(&text).map_err(|e| match e {
        Error::Syntax { source, .. } => Error::Syntax { path: path.into(), source },
        e => e,
    })
}

/// Parses and validates a config.
pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let syntax = |source| Error::Syntax { path: "<config>".into(), source: Box::new(source) };
    let mut doc: Table = toml::from_str(text).map_err(syntax)?;
    let mut machine = match doc.remove("machine") {
        None => Table::new(),
        Some(Value::Table(t)) => t,
        Some(_) => return Err(invalid("machine", "must be a table")),
    };
    let base = match machine.remove("preset") {
        None => MachineConfig::default(),
        Some(Value::String(p)) => preset(&p).ok_or_else(|| invalid("machine.preset", "unknown preset; use `server` or `desk`"))?,
        Some(_) => return Err(invalid("machine.preset", "must be a string")),
    };
    let Value::Table(mut merged) = Value::try_from(base).expect("machine config serializes") else {
        unreachable!("a struct serializes to a table")
    };
    overlay(&mut merged, machine);
    doc.insert("machine".into(), Value::Table(merged));
    let cfg: ExperimentConfig = Value::Table(doc).try_into().map_err(syntax)?;
    cfg.validate().map_err(Error::Invalid)?;
    Ok(cfg)
}

/// Renders a config as TOML that `parse` reads back unchanged.
pub fn render(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| invalid("config", e.to_string()))
}

fn overlay(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => overlay(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn invalid(field: &str, msg: impl Into<String>) -> Error {
    Error::Invalid(vec![daxsim_core::config::FieldError::new(field, msg)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use daxsim_core::{ControllerMode, WorkloadKind};

    #[test]
    fn minimal_config_takes_table_defaults() {
        let c = parse("mode = \"evu\"\n[workload]\nkind = \"seq_write\"\n").unwrap();
        assert_eq!(c.mode, ControllerMode::Evu);
        assert_eq!(c.workload.kind, WorkloadKind::SeqWrite);
        assert_eq!(c.machine, MachineConfig::default());
        assert_eq!(c.seeds, vec![1]);
        assert!(c.recovery_enabled);
    }

    #[test]
    fn single_cache_field_overrides_preset() {
        let c = parse(
            "mode = \"ev\"\n[workload]\nkind = \"rand_read\"\n[machine]\npreset = \"desk\"\n[machine.llc]\nassociativity = 8\n",
        )
        .unwrap();
        let mut want = MachineConfig::desk();
        want.llc.associativity = 8;
        assert_eq!(c.machine, want);
    }

    #[test]
    fn field_level_messages() {
        let e = parse("mode = \"evu\"\n[workload]\nkind = \"seq_write\"\nthreads = 0\n[machine.nvm]\nnum_dimms = 1\n")
            .unwrap_err();
        let Error::Invalid(errs) = e else { panic!("{e}") };
        let fields: Vec<_> = errs.iter().map(|e| e.field.as_str()).collect();
        assert!(fields.contains(&"workload.threads"), "{fields:?}");
        assert!(fields.contains(&"machine.nvm.num_dimms"), "{fields:?}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = parse("mode = \"evu\"\nworkload = { kind = \"seq_write\" }\n[machine.llc]\nsize = 3\n").unwrap_err();
        assert!(e.to_string().contains("size"), "{e}");
        assert!(parse("mode = \"bogus\"\nworkload = { kind = \"seq_write\" }\n").is_err());
        assert!(matches!(
            parse("mode = \"ev\"\nworkload = { kind = \"seq_write\" }\nmachine = { preset = \"huge\" }\n"),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn render_round_trips() {
        let mut c = parse("mode = \"txb_object\"\n[workload]\nkind = \"kv_skewed\"\nops_per_thread = 10\n").unwrap();
        c.seeds = vec![3, 4];
        assert_eq!(parse(&render(&c).unwrap()).unwrap(), c);
    }
}
