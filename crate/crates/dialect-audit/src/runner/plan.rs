//! Trial planning: expands a config into the ordered list of prompt
//! instances. The order is deterministic (task, setting, trait, dialect,
//! then repeats or corpus pairs), and every instance's randomization comes
//! from (run seed, global trial index) alone, so two plans from the same
//! config and seed are identical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{DialectCode, NoiseParams, TextPair};
use crate::lexicon::{DecisionScenario, Lexicon, TraitPair};
use crate::prompting::{build_instance, PromptInstance, TrialSpec};
use crate::runner::config::RunConfig;
use crate::{Error, Result, Setting, TaskKind};

/// Plan size broken down for display.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub total: usize,
    pub by_task: BTreeMap<String, usize>,
    pub by_setting: BTreeMap<String, usize>,
    pub by_dialect: BTreeMap<String, usize>,
}

impl PlanSummary {
    pub fn of(plan: &[PromptInstance]) -> PlanSummary {
        let mut by_task = BTreeMap::new();
        let mut by_setting = BTreeMap::new();
        let mut by_dialect = BTreeMap::new();
        for instance in plan {
            *by_task.entry(instance.task.to_string()).or_insert(0) += 1;
            *by_setting.entry(instance.setting.to_string()).or_insert(0) += 1;
            *by_dialect.entry(instance.dialect.to_string()).or_insert(0) += 1;
        }
        PlanSummary { total: plan.len(), by_task, by_setting, by_dialect }
    }
}

/// Corpus pairs for one dialect, id-sorted and capped.
fn dialect_pairs<'a>(
    corpus: &'a [TextPair],
    dialect: DialectCode,
    cap: Option<usize>,
) -> Vec<&'a TextPair> {
    let mut pairs: Vec<&TextPair> = corpus.iter().filter(|p| p.dialect == dialect).collect();
    pairs.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(cap) = cap {
        pairs.truncate(cap);
    }
    pairs
}

/// Active trait pairs in lexicon order, honoring the config filter.
fn trait_list<'a>(config: &RunConfig, lexicon: &'a Lexicon) -> Result<Vec<&'a TraitPair>> {
    let pairs: Vec<&TraitPair> = match &config.traits {
        Some(filter) => {
            for name in filter {
                if !lexicon.active_pairs().any(|p| &p.dialect_trait == name) {
                    return Err(Error::Plan(format!("unknown or inactive trait `{name}` in traits filter")));
                }
            }
            lexicon.active_pairs().filter(|p| filter.contains(&p.dialect_trait)).collect()
        }
        None => lexicon.active_pairs().collect(),
    };
    if pairs.is_empty() {
        return Err(Error::Plan("no active trait pairs selected".into()));
    }
    Ok(pairs)
}

/// Expands the config into the full ordered trial list.
pub fn build_plan(
    config: &RunConfig,
    lexicon: &Lexicon,
    corpus: Option<&[TextPair]>,
    noise: &NoiseParams,
) -> Result<Vec<PromptInstance>> {
    config.validate()?;
    let traits = trait_list(config, lexicon)?;
    let dialects = config.dialect_list();
    if dialects.is_empty() {
        return Err(Error::Plan("dialects filter selects nothing".into()));
    }

    let text_settings: Vec<Setting> = config
        .settings
        .iter()
        .copied()
        .filter(|s| matches!(s, Setting::Usage | Setting::NoisyControl))
        .collect();
    if !text_settings.is_empty() {
        let corpus = corpus.ok_or_else(|| {
            Error::Plan("usage or noisy_control settings require a corpus".into())
        })?;
        for dialect in &dialects {
            if dialect_pairs(corpus, *dialect, None).is_empty() {
                return Err(Error::Plan(format!("corpus has no text pairs for dialect `{dialect}`")));
            }
        }
    }

    let mut plan = Vec::new();
    let push = |plan: &mut Vec<PromptInstance>,
                    task: TaskKind,
                    setting: Setting,
                    pair: &TraitPair,
                    dialect: DialectCode,
                    text_pair: Option<&TextPair>,
                    scenario: Option<&DecisionScenario>|
     -> Result<()> {
        let trial_index = plan.len();
        let spec = TrialSpec {
            request_id: format!("t{trial_index:06}"),
            trial_index,
            task,
            setting,
            pair,
            dialect,
            text_pair,
            scenario,
            fallback_mode: config.fallback_mode,
            prefix_variant: config.prefix_variant,
            run_seed: config.seed,
            noise,
        };
        plan.push(build_instance(&spec)?);
        Ok(())
    };

    for &task in &config.tasks {
        for &setting in &config.settings {
            for pair in &traits {
                let scenarios: Vec<&DecisionScenario> = match task {
                    TaskKind::Association => Vec::new(),
                    TaskKind::Decision => {
                        let list: Vec<_> = lexicon.scenarios_for(&pair.dialect_trait).collect();
                        if list.is_empty() {
                            return Err(Error::Plan(format!(
                                "no decision scenarios for trait `{}`",
                                pair.dialect_trait
                            )));
                        }
                        list
                    }
                };
                for &dialect in &dialects {
                    match (task, setting) {
                        (TaskKind::Association, Setting::Naming) => {
                            for _ in 0..config.trials_per_condition {
                                push(&mut plan, task, setting, pair, dialect, None, None)?;
                            }
                        }
                        (TaskKind::Association, _) => {
                            let corpus = corpus.expect("checked above");
                            for text_pair in dialect_pairs(corpus, dialect, config.max_pairs_per_dialect) {
                                push(&mut plan, task, setting, pair, dialect, Some(text_pair), None)?;
                            }
                        }
                        (TaskKind::Decision, Setting::Naming) => {
                            for scenario in &scenarios {
                                for _ in 0..config.trials_per_condition {
                                    push(&mut plan, task, setting, pair, dialect, None, Some(scenario))?;
                                }
                            }
                        }
                        (TaskKind::Decision, _) => {
                            let corpus = corpus.expect("checked above");
                            for text_pair in dialect_pairs(corpus, dialect, config.max_pairs_per_dialect) {
                                for scenario in &scenarios {
                                    push(&mut plan, task, setting, pair, dialect, Some(text_pair), Some(scenario))?;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    if plan.is_empty() {
        return Err(Error::Plan("configuration produces an empty plan".into()));
    }
    Ok(plan)
}
