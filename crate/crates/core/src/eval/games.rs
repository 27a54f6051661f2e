//! Balanced record-level and user-level audit sets drawn from the audit
//! pool, and per-attack score sets over them.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;

use crate::attacks::{aggregate_user_score, AttackScoreSet, ScoreDomain};
use crate::error::{Error, Result};
use crate::seed;
use crate::series::UserId;
use crate::shadow::AttackMode;

/// Audit-pool indices of sampled records, in increasing order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordGame {
    pub indices: Vec<usize>,
    pub labels: Vec<bool>,
}

/// Draws `n` member and `n` non-member records without replacement.
pub fn sample_record_game(
    members: &[usize],
    nonmembers: &[usize],
    n: usize,
    seed: u64,
) -> Result<RecordGame> {
    if n == 0 {
        return Err(Error::Invalid("record game needs at least one sample per class".into()));
    }
    if members.len() < n || nonmembers.len() < n {
        return Err(Error::Insufficient(format!(
            "record game wants {n} per class, pools hold {} members and {} non-members",
            members.len(),
            nonmembers.len()
        )));
    }
    let mut rng = seed::derived_rng(seed, "record-game", 0);
    let mut picked: Vec<(usize, bool)> = members
        .choose_multiple(&mut rng, n)
        .map(|&i| (i, true))
        .chain(nonmembers.choose_multiple(&mut rng, n).map(|&i| (i, false)))
        .collect();
    picked.sort_unstable();
    Ok(RecordGame {
        indices: picked.iter().map(|p| p.0).collect(),
        labels: picked.iter().map(|p| p.1).collect(),
    })
}

/// Per-user record lists (audit-pool indices) with user membership labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserGame {
    pub users: Vec<UserId>,
    pub labels: Vec<bool>,
    pub records: Vec<Vec<usize>>,
}

/// Every member and non-member user once. `record_users[i]` is the owner of
/// audit record `i`; `per_user` caps the records used per user.
pub fn sample_user_game(
    record_users: &[UserId],
    members: &[UserId],
    nonmembers: &[UserId],
    per_user: Option<usize>,
    seed: u64,
) -> Result<UserGame> {
    let mut by_user: BTreeMap<&UserId, Vec<usize>> = BTreeMap::new();
    for (i, u) in record_users.iter().enumerate() {
        by_user.entry(u).or_default().push(i);
    }
    let mut units: Vec<(UserId, bool)> = members
        .iter()
        .map(|u| (u.clone(), true))
        .chain(nonmembers.iter().map(|u| (u.clone(), false)))
        .collect();
    units.sort();
    let mut game = UserGame {
        users: Vec::new(),
        labels: Vec::new(),
        records: Vec::new(),
    };
    for (k, (u, label)) in units.into_iter().enumerate() {
        let all = by_user
            .get(&u)
            .ok_or_else(|| Error::Insufficient(format!("user {u} has no audit records")))?;
        let recs = match per_user {
            Some(c) if c < all.len() => {
                let mut rng = seed::derived_rng(seed, "user-game", k as u64);
                let mut r: Vec<usize> = all.choose_multiple(&mut rng, c).copied().collect();
                r.sort_unstable();
                r
            }
            _ => all.clone(),
        };
        game.users.push(u);
        game.labels.push(label);
        game.records.push(recs);
    }
    if !game.labels.iter().any(|&l| l) || game.labels.iter().all(|&l| l) {
        return Err(Error::SingleClass("user game needs member and non-member users".into()));
    }
    Ok(game)
}

/// Scores of one attack on the record game; `pool_scores` and `unit_ids`
/// cover the whole audit pool.
pub fn run_record_game(
    game: &RecordGame,
    attack: &str,
    mode: Option<AttackMode>,
    domain: ScoreDomain,
    pool_scores: &[f64],
    unit_ids: &[String],
) -> AttackScoreSet {
    AttackScoreSet {
        attack: attack.to_string(),
        mode,
        domain,
        units: game.indices.iter().map(|&i| unit_ids[i].clone()).collect(),
        scores: game.indices.iter().map(|&i| pool_scores[i]).collect(),
        labels: game.labels.clone(),
    }
}

/// User scores by log-domain aggregation of each user's record scores.
pub fn run_user_game(
    game: &UserGame,
    attack: &str,
    mode: Option<AttackMode>,
    domain: ScoreDomain,
    pool_scores: &[f64],
) -> Result<AttackScoreSet> {
    let scores = game
        .records
        .iter()
        .map(|recs| {
            let s: Vec<f64> = recs.iter().map(|&i| pool_scores[i]).collect();
            aggregate_user_score(&s, domain)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackScoreSet {
        attack: attack.to_string(),
        mode,
        domain: ScoreDomain::Log,
        units: game.users.iter().map(|u| u.to_string()).collect(),
        scores,
        labels: game.labels.clone(),
    })
}
