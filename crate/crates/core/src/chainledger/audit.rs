use std::collections::BTreeMap;

use serde::Serialize;

use crate::cas::Cid;
use crate::cryptbox::IdentityId;

use super::record::{EventPayload, Member, RepoId};
use super::state::{apply_role_change, RepoState};

/// A single failed check on one commit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Finding {
    /// Record names a different repository.
    RepoMismatch,
    /// Stored `seq` differs from the record's position.
    SeqMismatch,
    /// GENESIS anywhere but seq 0, or a non-GENESIS at seq 0.
    KindMismatch,
    ParentMismatch,
    BadSignature,
    /// Author held no commit right when the commit was accepted.
    Unauthorized,
    /// More than N patches since the segment's genesis.
    CheckpointViolation,
    PayloadMissing,
    PayloadMismatch,
    DekFileMissing,
    DekFileMismatch,
    /// Stored record differs from the copy in its COMMITTED event.
    EventMismatch,
}

impl Finding {
    pub fn describe(self) -> &'static str {
        match self {
            Finding::RepoMismatch => "record belongs to another repository",
            Finding::SeqMismatch => "seq does not match chain position",
            Finding::KindMismatch => "commit kind invalid at this position",
            Finding::ParentMismatch => "parent link broken",
            Finding::BadSignature => "bad signature",
            Finding::Unauthorized => "author not authorized to commit",
            Finding::CheckpointViolation => "checkpoint rule violated",
            Finding::PayloadMissing => "payload missing",
            Finding::PayloadMismatch => "payload mismatch",
            Finding::DekFileMissing => "dek file missing",
            Finding::DekFileMismatch => "dek file mismatch",
            Finding::EventMismatch => "record differs from its commit event",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommitAudit {
    pub seq: u64,
    pub parent_link_ok: bool,
    pub signature_ok: bool,
    pub payload_ok: bool,
    pub checkpoint_ok: bool,
    pub findings: Vec<Finding>,
}

impl CommitAudit {
    fn new(seq: u64, findings: Vec<Finding>) -> Self {
        let has = |f: &[Finding]| findings.iter().any(|x| f.contains(x));
        CommitAudit {
            seq,
            parent_link_ok: !has(&[Finding::ParentMismatch, Finding::SeqMismatch, Finding::KindMismatch]),
            signature_ok: !has(&[Finding::BadSignature, Finding::Unauthorized]),
            payload_ok: !has(&[
                Finding::PayloadMissing,
                Finding::PayloadMismatch,
                Finding::DekFileMissing,
                Finding::DekFileMismatch,
            ]),
            checkpoint_ok: !has(&[Finding::CheckpointViolation]),
            findings,
        }
    }

    pub fn ok(&self) -> bool {
        self.findings.is_empty()
    }
}

/// A roster change that should never have been accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PolicyFinding {
    pub event_seq: u64,
    pub reason: String,
}

/// Outcome of attempting to rebuild the head plaintext.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Reconstruction {
    Ok {
        seq: u64,
        bytes: u64,
    },
    Failed {
        seq: Option<u64>,
        error: String,
    },
    /// The auditing identity holds no key for the head segment.
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub repo_id: RepoId,
    pub commits: Vec<CommitAudit>,
    pub policy: Vec<PolicyFinding>,
    pub reconstruction: Option<Reconstruction>,
}

impl AuditReport {
    pub fn verdict(&self) -> bool {
        self.commits.iter().all(CommitAudit::ok)
            && self.policy.is_empty()
            && !matches!(self.reconstruction, Some(Reconstruction::Failed { .. }))
    }

    /// Seqs with at least one finding, plus the seq a failed
    /// reconstruction blamed.
    pub fn failing_seqs(&self) -> Vec<u64> {
        let mut seqs: Vec<u64> = self.commits.iter().filter(|c| !c.ok()).map(|c| c.seq).collect();
        if let Some(Reconstruction::Failed { seq: Some(s), .. }) = self.reconstruction {
            seqs.push(s);
        }
        seqs.sort_unstable();
        seqs.dedup();
        seqs
    }

    pub fn findings_for(&self, seq: u64) -> &[Finding] {
        self.commits
            .iter()
            .find(|c| c.seq == seq)
            .map_or(&[], |c| c.findings.as_slice())
    }
}

fn check_blob(
    cid: &Cid,
    lookup: &dyn Fn(&Cid) -> Option<[u8; 32]>,
    missing: Finding,
    mismatch: Finding,
) -> Option<Finding> {
    match lookup(cid) {
        None => Some(missing),
        Some(digest) if digest != *cid.digest() => Some(mismatch),
        Some(_) => None,
    }
}

/// Re-checks every commit of `repo` from its stored records and events.
pub(crate) fn audit(repo: &RepoState, lookup: &dyn Fn(&Cid) -> Option<[u8; 32]>) -> AuditReport {
    let mut policy = Vec::new();

    // Roster in force when each commit was accepted, in event order.
    let mut roster: BTreeMap<IdentityId, Member> = BTreeMap::new();
    let mut interval = repo.checkpoint_interval;
    let mut committed = Vec::new();
    for event in &repo.events {
        match &event.payload {
            EventPayload::RepoCreated { config, .. } => {
                roster = config.roster.clone();
                interval = config.checkpoint_interval;
            }
            EventPayload::RoleSet { caller, member, change } => {
                if let Err(err) = apply_role_change(&mut roster, caller, member, change) {
                    policy.push(PolicyFinding {
                        event_seq: event.event_seq,
                        reason: err.to_string(),
                    });
                }
            }
            EventPayload::Committed(rec) => committed.push((rec, roster.clone())),
        }
    }

    let mut commits = Vec::with_capacity(repo.records.len());
    let mut segment_start = 0u64;
    for (i, rec) in repo.records.iter().enumerate() {
        let pos = i as u64;
        let mut findings = Vec::new();
        if rec.repo_id != repo.repo_id {
            findings.push(Finding::RepoMismatch);
        }
        if rec.seq != pos {
            findings.push(Finding::SeqMismatch);
        }
        let kind_ok = if pos == 0 {
            rec.kind == super::CommitKind::Genesis
        } else {
            rec.kind != super::CommitKind::Genesis
        };
        if !kind_ok {
            findings.push(Finding::KindMismatch);
        }
        let expected_parent = (i > 0).then(|| repo.records[i - 1].cid);
        if rec.parent_cid != expected_parent {
            findings.push(Finding::ParentMismatch);
        }

        match committed.get(i) {
            Some((event_rec, roster_then)) => {
                if *event_rec != rec {
                    findings.push(Finding::EventMismatch);
                }
                match roster_then.get(&rec.author_id) {
                    Some(m) => {
                        if !m.role.can_commit() {
                            findings.push(Finding::Unauthorized);
                        }
                        if !rec.verify_signature(&m.keys.signing) {
                            findings.push(Finding::BadSignature);
                        }
                    }
                    None => findings.push(Finding::Unauthorized),
                }
            }
            None => findings.push(Finding::EventMismatch),
        }

        if rec.kind.starts_segment() {
            segment_start = pos;
        } else if pos - segment_start > interval {
            findings.push(Finding::CheckpointViolation);
        }

        findings.extend(check_blob(
            &rec.cid,
            lookup,
            Finding::PayloadMissing,
            Finding::PayloadMismatch,
        ));
        findings.extend(check_blob(
            &rec.dek_file_cid,
            lookup,
            Finding::DekFileMissing,
            Finding::DekFileMismatch,
        ));
        commits.push(CommitAudit::new(pos, findings));
    }
    if committed.len() > repo.records.len() {
        policy.push(PolicyFinding {
            event_seq: repo.events.len() as u64,
            reason: format!(
                "{} commit events but only {} stored records",
                committed.len(),
                repo.records.len()
            ),
        });
    }

    AuditReport {
        repo_id: repo.repo_id,
        commits,
        policy,
        reconstruction: None,
    }
}
