//! Association rule mining: Apriori frequent itemsets and rule generation
//! with support, confidence and lift.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use crate::domain::{ObjectId, Transaction};
use crate::error::{Error, Result};
use crate::io::join_ids;

/// Default bound on itemset length.
pub const DEFAULT_MAX_ITEMSET_LEN: usize = 4;

/// Slack applied to threshold comparisons so that a support of exactly
/// `count / n` passes a threshold written as the same decimal.
const THRESHOLD_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FrequentItemset {
    /// Ascending, nonempty.
    pub items: Vec<ObjectId>,
    pub count: usize,
    pub support: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationRule {
    pub antecedent: Vec<ObjectId>,
    pub consequent: Vec<ObjectId>,
    /// Support of antecedent ∪ consequent.
    pub support: f64,
    pub confidence: f64,
    pub lift: f64,
}

fn check_fraction(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(Error::Param(format!("{name} must be in (0, 1], got {value}")))
    }
}

/// Vertical bitset of the transactions containing an itemset.
#[derive(Clone)]
struct TidSet(Vec<u64>);

impl TidSet {
    fn with_len(n: usize) -> Self {
        TidSet(vec![0; n.div_ceil(64)])
    }

    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn and(&self, other: &TidSet) -> TidSet {
        TidSet(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
}

/// Apriori level-wise search for every itemset of at most `max_len` items
/// whose support reaches `min_support`.
///
/// Output is ordered by itemset length, then lexicographically by item id.
pub fn gen_frequent_itemsets(
    transactions: &[Transaction],
    min_support: f64,
    max_len: usize,
) -> Result<Vec<FrequentItemset>> {
    check_fraction("minimum support", min_support)?;
    if transactions.is_empty() {
        return Err(Error::Param("no transactions to mine".into()));
    }
    if max_len == 0 {
        return Err(Error::Param("maximum itemset length must be at least 1".into()));
    }

    let n = transactions.len();
    let frequent = |count: usize| count as f64 / n as f64 >= min_support - THRESHOLD_EPS;

    let mut singles: HashMap<ObjectId, TidSet> = HashMap::new();
    for (t, tx) in transactions.iter().enumerate() {
        for &item in tx.items() {
            singles.entry(item).or_insert_with(|| TidSet::with_len(n)).set(t);
        }
    }

    let mut level: Vec<(Vec<ObjectId>, TidSet)> = singles
        .into_iter()
        .filter(|(_, tids)| frequent(tids.count()))
        .map(|(item, tids)| (vec![item], tids))
        .collect();
    level.sort_by(|a, b| a.0.cmp(&b.0));

    let mut out = Vec::new();
    let mut len = 1;
    while !level.is_empty() {
        out.extend(level.iter().map(|(items, tids)| {
            let count = tids.count();
            FrequentItemset {
                items: items.clone(),
                count,
                support: count as f64 / n as f64,
            }
        }));
        if len == max_len {
            break;
        }

        let known: HashSet<&[ObjectId]> = level.iter().map(|(i, _)| i.as_slice()).collect();
        let mut next = Vec::new();
        // Join itemsets sharing their first len-1 items. `level` is sorted,
        // so the join partners of `i` form a contiguous run after it.
        for i in 0..level.len() {
            let (left, left_tids) = &level[i];
            for (right, right_tids) in &level[i + 1..] {
                if left[..len - 1] != right[..len - 1] {
                    break;
                }
                let mut cand = left.clone();
                cand.push(right[len - 1]);
                let all_subsets_frequent = (0..cand.len() - 2).all(|skip| {
                    let sub: Vec<ObjectId> = cand
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != skip)
                        .map(|(_, &x)| x)
                        .collect();
                    known.contains(sub.as_slice())
                });
                if !all_subsets_frequent {
                    continue;
                }
                let tids = left_tids.and(right_tids);
                if frequent(tids.count()) {
                    next.push((cand, tids));
                }
            }
        }
        level = next;
        len += 1;
    }
    Ok(out)
}

/// Every rule `A ⇒ B` with `A ∪ B` a frequent itemset, `A`, `B` nonempty
/// and disjoint, and confidence at least `min_confidence`.
///
/// `itemsets` must be closed under taking subsets, which Apriori output is.
pub fn gen_rules(itemsets: &[FrequentItemset], min_confidence: f64) -> Result<Vec<AssociationRule>> {
    check_fraction("minimum confidence", min_confidence)?;
    let support: HashMap<&[ObjectId], f64> = itemsets.iter().map(|s| (s.items.as_slice(), s.support)).collect();
    let lookup = |items: &[ObjectId]| -> Result<f64> {
        support.get(items).copied().ok_or_else(|| {
            Error::Param(format!(
                "itemsets not closed under subsets: {{{}}} missing",
                join_ids(items, ",")
            ))
        })
    };

    let mut rules = Vec::new();
    for set in itemsets.iter().filter(|s| s.items.len() >= 2) {
        let k = set.items.len();
        for mask in 1..(1u64 << k) - 1 {
            let (mut ante, mut cons) = (Vec::new(), Vec::new());
            for (bit, &item) in set.items.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    ante.push(item);
                } else {
                    cons.push(item);
                }
            }
            let s_ante = lookup(&ante)?;
            let s_cons = lookup(&cons)?;
            let confidence = set.support / s_ante;
            if confidence < min_confidence - THRESHOLD_EPS {
                continue;
            }
            rules.push(AssociationRule {
                antecedent: ante,
                consequent: cons,
                support: set.support,
                confidence,
                lift: set.support / (s_ante * s_cons),
            });
        }
    }
    Ok(rules)
}

/// Keeps rules with lift ≥ 1, preserving order.
pub fn filter_lift(rules: Vec<AssociationRule>) -> Vec<AssociationRule> {
    rules.into_iter().filter(|r| r.lift >= 1.0).collect()
}

/// Rules mined at one (minimum support, minimum confidence) point, indexed
/// for antecedent lookups.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    rules: Vec<AssociationRule>,
    pub min_support: f64,
    pub min_confidence: f64,
    pub n_transactions: usize,
    pub n_itemsets: usize,
    /// Smallest antecedent item → indices of rules with that antecedent head.
    by_head: HashMap<ObjectId, Vec<usize>>,
}

impl RuleSet {
    pub fn new(
        rules: Vec<AssociationRule>,
        min_support: f64,
        min_confidence: f64,
        n_transactions: usize,
        n_itemsets: usize,
    ) -> Self {
        let mut by_head: HashMap<ObjectId, Vec<usize>> = HashMap::new();
        for (i, rule) in rules.iter().enumerate() {
            if let Some(&head) = rule.antecedent.first() {
                by_head.entry(head).or_default().push(i);
            }
        }
        Self {
            rules,
            min_support,
            min_confidence,
            n_transactions,
            n_itemsets,
            by_head,
        }
    }

    /// Mines itemsets and rules and keeps the rules with lift ≥ 1.
    pub fn mine(transactions: &[Transaction], min_support: f64, min_confidence: f64, max_len: usize) -> Result<Self> {
        let itemsets = gen_frequent_itemsets(transactions, min_support, max_len)?;
        let rules = filter_lift(gen_rules(&itemsets, min_confidence)?);
        Ok(Self::new(
            rules,
            min_support,
            min_confidence,
            transactions.len(),
            itemsets.len(),
        ))
    }

    pub fn rules(&self) -> &[AssociationRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// `antecedent|consequent|support|confidence|lift` rows, ids `;`-joined.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("antecedent|consequent|support|confidence|lift\n");
        for r in &self.rules {
            let _ = writeln!(
                out,
                "{}|{}|{}|{}|{}",
                join_ids(&r.antecedent, ";"),
                join_ids(&r.consequent, ";"),
                r.support,
                r.confidence,
                r.lift
            );
        }
        out
    }
}

/// A candidate object produced by rule matching.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleMatch {
    pub object: ObjectId,
    /// Index into [`RuleSet::rules`] of the highest-lift rule naming `object`.
    pub rule: usize,
    pub lift: f64,
}

/// Consequent items of every rule whose antecedent lies within `context`,
/// minus items already in `context`. Each item carries its highest-lift
/// rule. Sorted by descending lift, then ascending id.
pub fn match_rules(ruleset: &RuleSet, context: &BTreeSet<ObjectId>) -> Vec<RuleMatch> {
    let mut best: HashMap<ObjectId, (usize, f64)> = HashMap::new();
    for head in context {
        let Some(indices) = ruleset.by_head.get(head) else {
            continue;
        };
        for &i in indices {
            let rule = &ruleset.rules[i];
            if !rule.antecedent.iter().all(|a| context.contains(a)) {
                continue;
            }
            for &item in rule.consequent.iter().filter(|c| !context.contains(c)) {
                best.entry(item)
                    .and_modify(|cur| {
                        if rule.lift > cur.1 || (rule.lift == cur.1 && i < cur.0) {
                            *cur = (i, rule.lift);
                        }
                    })
                    .or_insert((i, rule.lift));
            }
        }
    }
    let mut out: Vec<RuleMatch> = best
        .into_iter()
        .map(|(object, (rule, lift))| RuleMatch { object, rule, lift })
        .collect();
    out.sort_by(|a, b| b.lift.total_cmp(&a.lift).then(a.object.cmp(&b.object)));
    out
}
