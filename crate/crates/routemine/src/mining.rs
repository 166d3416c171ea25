// Copyright 2026 The routemine Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Frequent destination patterns and association rules.
//!
//! Historical routes become transactions: the set of cells (at one level)
//! that a route's stops fall in. Frequent cell combinations are mined with
//! FP-growth and turned into association rules "loads that visited cells X
//! also visited cell y", which the sorter later uses to judge whether a new
//! package continues a load's pattern.
//!
//! Mining runs once per cell level; coarse levels give few, strong, general
//! rules and fine levels give many specific ones. The sorter consults all of
//! them and averages.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geocell::{cell_at, CellId, GeoPoint, LevelSet};

/// The distinct cells one route's stops occupy at one level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub level: u8,
    /// Distinct, ascending by token.
    pub items: Vec<CellId>,
}

/// Converts one historical route (its stop coordinates, in any order) into
/// one transaction per tracked level. Routes with no stops yield nothing.
pub fn route_to_transactions(stops: &[GeoPoint], levels: &LevelSet) -> Result<Vec<Transaction>> {
    if stops.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(levels.len());
    for level in levels.iter() {
        let mut items: Vec<CellId> = stops
            .iter()
            .map(|&p| cell_at(p, level))
            .collect::<Result<_>>()?;
        items.sort_unstable();
        items.dedup();
        out.push(Transaction { level, items });
    }
    Ok(out)
}

/// Mining parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    /// Minimum support as a fraction of the transaction count, in (0, 1].
    pub min_support: f64,
    /// Minimum rule confidence, in [0, 1].
    pub min_confidence: f64,
    /// Levels to mine. One rule set is produced per level.
    pub levels: LevelSet,
    /// Longest antecedent a rule may have; bounds pattern length too.
    pub max_antecedent: usize,
}

impl Default for MiningConfig {
    fn default() -> MiningConfig {
        MiningConfig {
            min_support: 0.01,
            min_confidence: 0.2,
            levels: LevelSet::default(),
            max_antecedent: 6,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.min_support.is_finite() || self.min_support <= 0.0 || self.min_support > 1.0 {
            return Err(Error::Config(format!(
                "min_support {} must lie in (0, 1]",
                self.min_support
            )));
        }
        if !self.min_confidence.is_finite() || !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::Config(format!(
                "min_confidence {} must lie in [0, 1]",
                self.min_confidence
            )));
        }
        if self.max_antecedent == 0 {
            return Err(Error::Config("max_antecedent must be positive".into()));
        }
        Ok(())
    }
}

/// Absolute support threshold: the smallest transaction count that reaches
/// `min_support` as a fraction of `n`. Rounded up, with a guard against the
/// product landing a hair above an integer in floating point (0.07 * 100
/// must mean 7, not 8). Never below 1.
pub fn support_count(min_support: f64, n: usize) -> u64 {
    let raw = min_support * n as f64;
    ((raw - 1e-9).ceil() as u64).max(1)
}

/// Frequent items in descending count order, ties broken by ascending cell
/// token. The returned order is the header order of the FP-tree; transaction
/// items are reordered to it so shared prefixes collapse into shared paths.
pub fn count_and_order(transactions: &[Transaction], min_count: u64) -> Vec<(CellId, u64)> {
    let mut counts: HashMap<CellId, u64> = HashMap::new();
    for t in transactions {
        for &item in &t.items {
            *counts.entry(item).or_insert(0) += 1;
        }
    }
    let mut order: Vec<(CellId, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .collect();
    order.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    order
}

/// One frequent itemset with its transaction count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequentPattern {
    /// Ascending by token.
    pub items: Vec<CellId>,
    pub count: u64,
}

/// Prefix tree over transactions with infrequent items removed and the rest
/// in header (descending count) order. Shared prefixes share nodes, so the
/// tree is far smaller than the transaction list it summarizes.
pub struct FpTree {
    /// Frequent items in header order; `rank` below indexes this.
    order: Vec<(CellId, u64)>,
    tree: RankTree,
}

/// Tree node. `rank` is the item's index in header order; the root carries
/// `u32::MAX`.
struct FpNode {
    rank: u32,
    count: u64,
    parent: usize,
    children: Vec<(u32, usize)>,
}

/// The tree proper, in item-rank space. Conditional trees reuse this shape
/// with the same global ranks, so header order never has to be recomputed.
struct RankTree {
    nodes: Vec<FpNode>,
    /// Per present rank: total count and the nodes carrying it, ascending
    /// by rank.
    headers: Vec<RankHeader>,
}

struct RankHeader {
    rank: u32,
    count: u64,
    node_ids: Vec<usize>,
}

impl RankTree {
    fn new() -> RankTree {
        RankTree {
            nodes: vec![FpNode {
                rank: u32::MAX,
                count: 0,
                parent: 0,
                children: Vec::new(),
            }],
            headers: Vec::new(),
        }
    }

    /// Inserts a path of ascending ranks with the given weight.
    fn insert(&mut self, ranks: &[u32], weight: u64) {
        let mut at = 0usize;
        for &rank in ranks {
            let next = self.nodes[at]
                .children
                .iter()
                .find(|&&(r, _)| r == rank)
                .map(|&(_, idx)| idx);
            at = match next {
                Some(idx) => {
                    self.nodes[idx].count += weight;
                    idx
                }
                None => {
                    let idx = self.nodes.len();
                    self.nodes.push(FpNode {
                        rank,
                        count: weight,
                        parent: at,
                        children: Vec::new(),
                    });
                    self.nodes[at].children.push((rank, idx));
                    self.header_mut(rank).node_ids.push(idx);
                    idx
                }
            };
            self.header_mut(rank).count += weight;
        }
    }

    fn header_mut(&mut self, rank: u32) -> &mut RankHeader {
        let pos = match self.headers.binary_search_by_key(&rank, |h| h.rank) {
            Ok(pos) => pos,
            Err(pos) => {
                self.headers.insert(
                    pos,
                    RankHeader {
                        rank,
                        count: 0,
                        node_ids: Vec::new(),
                    },
                );
                pos
            }
        };
        &mut self.headers[pos]
    }

    /// Path of ranks from the root down to (excluding) the node.
    fn prefix_path(&self, mut node: usize) -> Vec<u32> {
        let mut path = Vec::new();
        loop {
            node = self.nodes[node].parent;
            if node == 0 {
                break;
            }
            path.push(self.nodes[node].rank);
        }
        path.reverse();
        path
    }

    /// Conditional tree for one header item: its prefix paths, weighted by
    /// the item's node counts, with items infrequent in that context pruned.
    fn conditional(&self, header: &RankHeader, min_count: u64) -> RankTree {
        let mut base: Vec<(Vec<u32>, u64)> = Vec::with_capacity(header.node_ids.len());
        let mut counts: HashMap<u32, u64> = HashMap::new();
        for &node_id in &header.node_ids {
            let count = self.nodes[node_id].count;
            let path = self.prefix_path(node_id);
            for &r in &path {
                *counts.entry(r).or_insert(0) += count;
            }
            if !path.is_empty() {
                base.push((path, count));
            }
        }
        let mut tree = RankTree::new();
        for (path, weight) in base {
            let kept: Vec<u32> = path
                .into_iter()
                .filter(|r| counts.get(r).copied().unwrap_or(0) >= min_count)
                .collect();
            if !kept.is_empty() {
                tree.insert(&kept, weight);
            }
        }
        tree
    }
}

/// Builds the FP-tree: filters each transaction to frequent items, reorders
/// them to header order, and inserts the result as a path.
pub fn build_fp_tree(transactions: &[Transaction], order: &[(CellId, u64)]) -> FpTree {
    let rank_of: HashMap<CellId, u32> = order
        .iter()
        .enumerate()
        .map(|(i, &(cell, _))| (cell, i as u32))
        .collect();
    let mut tree = RankTree::new();
    let mut ranks = Vec::new();
    for t in transactions {
        ranks.clear();
        ranks.extend(t.items.iter().filter_map(|c| rank_of.get(c).copied()));
        ranks.sort_unstable();
        if !ranks.is_empty() {
            tree.insert(&ranks, 1);
        }
    }
    FpTree {
        order: order.to_vec(),
        tree,
    }
}

/// Mines all frequent patterns from the tree, recursing through conditional
/// trees from the least frequent header item upward. `max_len` caps pattern
/// size (`None` mines the complete closure). Patterns come back with items
/// ascending by token, sorted by item list, and include the singletons.
pub fn mine_patterns(
    tree: &FpTree,
    min_count: u64,
    max_len: Option<usize>,
) -> Vec<FrequentPattern> {
    let mut out = Vec::new();
    if max_len != Some(0) {
        let mut suffix = Vec::new();
        mine_rank_tree(&tree.tree, min_count, max_len, &mut suffix, &mut out);
    }
    let mut patterns: Vec<FrequentPattern> = out
        .into_iter()
        .map(|(ranks, count)| {
            let mut items: Vec<CellId> = ranks.iter().map(|&r| tree.order[r as usize].0).collect();
            items.sort_unstable();
            FrequentPattern { items, count }
        })
        .collect();
    patterns.sort_unstable_by(|a, b| a.items.cmp(&b.items));
    patterns
}

fn mine_rank_tree(
    tree: &RankTree,
    min_count: u64,
    max_len: Option<usize>,
    suffix: &mut Vec<u32>,
    out: &mut Vec<(Vec<u32>, u64)>,
) {
    for header in tree.headers.iter().rev() {
        if header.count < min_count {
            continue;
        }
        suffix.push(header.rank);
        out.push((suffix.clone(), header.count));
        if max_len.map_or(true, |m| suffix.len() < m) {
            let cond = tree.conditional(header, min_count);
            if !cond.headers.is_empty() {
                mine_rank_tree(&cond, min_count, max_len, suffix, out);
            }
        }
        suffix.pop();
    }
}

/// An association rule at one cell level: loads whose footprint includes the
/// antecedent cells tend to include the consequent cell too.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociationRule {
    pub level: u8,
    /// Ascending by token; never contains the consequent.
    pub antecedent: Vec<CellId>,
    pub consequent: CellId,
    /// Fraction of transactions containing antecedent and consequent.
    pub support: f64,
    /// support(antecedent + consequent) / support(antecedent).
    pub confidence: f64,
}

/// Derives single-consequent rules from a mined pattern closure.
///
/// For each pattern of size >= 2 and each choice of consequent item, the
/// rule's confidence divides the pattern count by its antecedent's count.
/// The closure property of frequent patterns guarantees the antecedent is in
/// the closure; a miss means the pattern input was not a closure and is
/// reported as a contract error. Antecedents longer than `max_antecedent`
/// and rules below `min_confidence` are dropped.
pub fn extract_rules(
    patterns: &[FrequentPattern],
    n_transactions: usize,
    level: u8,
    config: &MiningConfig,
) -> Result<Vec<AssociationRule>> {
    let counts: HashMap<&[CellId], u64> = patterns
        .iter()
        .map(|p| (p.items.as_slice(), p.count))
        .collect();
    let mut rules = Vec::new();
    let mut antecedent = Vec::new();
    for p in patterns {
        if p.items.len() < 2 || p.items.len() > config.max_antecedent + 1 {
            continue;
        }
        for (i, &consequent) in p.items.iter().enumerate() {
            antecedent.clear();
            antecedent.extend(p.items.iter().take(i));
            antecedent.extend(p.items.iter().skip(i + 1));
            let ante_count = *counts.get(antecedent.as_slice()).ok_or_else(|| {
                Error::Contract(format!(
                    "pattern closure is missing antecedent of {:?}",
                    p.items
                ))
            })?;
            debug_assert!(ante_count >= p.count);
            let confidence = p.count as f64 / ante_count as f64;
            if confidence >= config.min_confidence {
                rules.push(AssociationRule {
                    level,
                    antecedent: antecedent.clone(),
                    consequent,
                    support: p.count as f64 / n_transactions as f64,
                    confidence,
                });
            }
        }
    }
    Ok(rules)
}

/// All mined rules, indexed for the two lookups the sorter performs: exact
/// antecedent match and best matching subset per consequent.
#[derive(Clone, Debug, Default)]
pub struct RuleStore {
    levels: std::collections::BTreeMap<u8, LevelRules>,
}

#[derive(Clone, Debug, Default)]
struct LevelRules {
    by_key: HashMap<(Vec<CellId>, CellId), (f64, f64)>,
    by_consequent: HashMap<CellId, Vec<StoredRule>>,
}

/// One rule as kept for subset matching.
#[derive(Clone, Debug)]
pub struct StoredRule {
    pub antecedent: Vec<CellId>,
    pub support: f64,
    pub confidence: f64,
}

/// Wire form of one rule line.
#[derive(Serialize, Deserialize)]
struct RuleRecord {
    level: u8,
    antecedent: Vec<String>,
    consequent: String,
    support: f64,
    confidence: f64,
}

impl RuleStore {
    pub fn new() -> RuleStore {
        RuleStore::default()
    }

    /// Inserts one rule. The antecedent must be non-empty, sorted ascending,
    /// duplicate-free, and must not contain the consequent; the (antecedent,
    /// consequent, level) key must be new.
    pub fn insert(&mut self, rule: AssociationRule) -> Result<()> {
        if rule.antecedent.is_empty() {
            return Err(Error::Input("rule antecedent must not be empty".into()));
        }
        for w in rule.antecedent.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Input(format!(
                    "rule antecedent must be sorted and distinct, got {:?}",
                    rule.antecedent
                )));
            }
        }
        if rule.antecedent.contains(&rule.consequent) {
            return Err(Error::Input(format!(
                "rule consequent {} repeats an antecedent item",
                rule.consequent
            )));
        }
        if !(rule.support.is_finite() && rule.confidence.is_finite()) {
            return Err(Error::Input("rule support/confidence must be finite".into()));
        }
        let level = self.levels.entry(rule.level).or_default();
        let key = (rule.antecedent.clone(), rule.consequent);
        if level.by_key.contains_key(&key) {
            return Err(Error::Input(format!(
                "duplicate rule at level {}: {:?} => {}",
                rule.level, rule.antecedent, rule.consequent
            )));
        }
        level.by_key.insert(key, (rule.support, rule.confidence));
        level
            .by_consequent
            .entry(rule.consequent)
            .or_default()
            .push(StoredRule {
                antecedent: rule.antecedent,
                support: rule.support,
                confidence: rule.confidence,
            });
        Ok(())
    }

    /// Support and confidence for an exact (antecedent, consequent) key.
    /// The antecedent must be sorted ascending.
    pub fn lookup(
        &self,
        level: u8,
        antecedent: &[CellId],
        consequent: CellId,
    ) -> Option<(f64, f64)> {
        debug_assert!(antecedent.windows(2).all(|w| w[0] < w[1]));
        let rules = self.levels.get(&level)?;
        // The map key owns its Vec; one small allocation per lookup.
        rules
            .by_key
            .get(&(antecedent.to_vec(), consequent))
            .copied()
    }

    /// Confidence for an exact key, 0.0 when the rule is absent.
    pub fn confidence_of(&self, level: u8, antecedent: &[CellId], consequent: CellId) -> f64 {
        self.lookup(level, antecedent, consequent)
            .map(|(_, c)| c)
            .unwrap_or(0.0)
    }

    /// All rules predicting `consequent` at `level`, for subset matching.
    pub fn rules_for_consequent(&self, level: u8, consequent: CellId) -> &[StoredRule] {
        self.levels
            .get(&level)
            .and_then(|l| l.by_consequent.get(&consequent))
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.levels.values().all(|l| l.by_key.is_empty())
    }

    pub fn len(&self) -> usize {
        self.levels.values().map(|l| l.by_key.len()).sum()
    }

    pub fn len_at_level(&self, level: u8) -> usize {
        self.levels.get(&level).map_or(0, |l| l.by_key.len())
    }

    pub fn mined_levels(&self) -> Vec<u8> {
        self.levels
            .iter()
            .filter(|(_, l)| !l.by_key.is_empty())
            .map(|(&lv, _)| lv)
            .collect()
    }

    /// Writes the store as JSON Lines in canonical order: ascending level,
    /// then antecedent, then consequent. Reading the output back and writing
    /// it again reproduces the bytes.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for (&level, rules) in &self.levels {
            let mut keys: Vec<&(Vec<CellId>, CellId)> = rules.by_key.keys().collect();
            keys.sort_unstable();
            for key in keys {
                let (support, confidence) = rules.by_key[key];
                let record = RuleRecord {
                    level,
                    antecedent: key.0.iter().map(|c| c.token()).collect(),
                    consequent: key.1.token(),
                    support,
                    confidence,
                };
                serde_json::to_writer(&mut w, &record)?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    /// Reads a JSON Lines rule file. Every line must parse; duplicate keys
    /// are an error.
    pub fn read_jsonl<R: Read>(r: R) -> Result<RuleStore> {
        let mut store = RuleStore::new();
        for (i, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: RuleRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Input(format!("rule line {}: {e}", i + 1)))?;
            let antecedent: Vec<CellId> = record
                .antecedent
                .iter()
                .map(|t| CellId::from_token(t))
                .collect::<Result<_>>()
                .map_err(|e| Error::Input(format!("rule line {}: {e}", i + 1)))?;
            let consequent = CellId::from_token(&record.consequent)
                .map_err(|e| Error::Input(format!("rule line {}: {e}", i + 1)))?;
            store
                .insert(AssociationRule {
                    level: record.level,
                    antecedent,
                    consequent,
                    support: record.support,
                    confidence: record.confidence,
                })
                .map_err(|e| Error::Input(format!("rule line {}: {e}", i + 1)))?;
        }
        Ok(store)
    }
}

/// Mines rules at every configured level from historical routes, given as
/// one stop list per route. Levels are independent and run in parallel.
/// An empty store (no rules anywhere) is legal and only logged.
pub fn mine_levels(route_stops: &[Vec<GeoPoint>], config: &MiningConfig) -> Result<RuleStore> {
    use rayon::prelude::*;

    config.validate()?;
    let per_level: Vec<Vec<AssociationRule>> = config
        .levels
        .levels()
        .par_iter()
        .map(|&level| -> Result<Vec<AssociationRule>> {
            let level_set = LevelSet::new(vec![level])?;
            let mut transactions = Vec::with_capacity(route_stops.len());
            for stops in route_stops {
                transactions.extend(route_to_transactions(stops, &level_set)?);
            }
            if transactions.is_empty() {
                return Ok(Vec::new());
            }
            let min_count = support_count(config.min_support, transactions.len());
            let order = count_and_order(&transactions, min_count);
            let tree = build_fp_tree(&transactions, &order);
            let patterns = mine_patterns(&tree, min_count, Some(config.max_antecedent + 1));
            extract_rules(&patterns, transactions.len(), level, config)
        })
        .collect::<Result<_>>()?;

    let mut store = RuleStore::new();
    for rules in per_level {
        for rule in rules {
            store.insert(rule)?;
        }
    }
    if store.is_empty() {
        log::warn!(
            "mining produced no rules at any level (min_support {}, min_confidence {})",
            config.min_support,
            config.min_confidence
        );
    }
    Ok(store)
}
