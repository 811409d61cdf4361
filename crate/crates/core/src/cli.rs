//! The `edg` command line.
//!
//! Working directory layout:
//!
//! ```text
//! <repo>/.edg/config      # TOML: repo_id, checkpoint_interval, ledger, cas
//! <repo>/.edg/keystore/   # passphrase-protected identities
//! <repo>/.edg/ledger/     # commit ledger (default location)
//! <repo>/.edg/cas/        # encrypted blobs (default location)
//! <repo>/data             # working copy
//! ```
//!
//! Exit codes: 0 success, 1 usage, 2 permission or authentication,
//! 3 integrity or verification failure, 4 not found, 5 internal.
//!
//! With `--json` every result, and every error, is one JSON object per line.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cas::{self, Store};
use crate::chainledger::{self, EventKind, EventPayload, Ledger, LedgerEvent, Member, RepoId, Role, RoleChange};
use crate::cryptbox::{self, Identity, IdentityId};
use crate::keystore::{self, Keystore};
use crate::patchset;
use crate::repoclient::{self, RepositoryHandle, DEFAULT_CHECKPOINT_INTERVAL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DENIED: i32 = 2;
pub const EXIT_INTEGRITY: i32 = 3;
pub const EXIT_NOT_FOUND: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "edg",
    version,
    about = "Encrypted, signed version control for a single dataset"
)]
struct Cli {
    /// Repository working directory.
    #[arg(long, env = "EDG_REPO", default_value = ".", global = true)]
    repo: PathBuf,
    /// Keystore identity to act as.
    #[arg(long, env = "EDG_IDENTITY", global = true)]
    identity: Option<String>,
    /// Read the passphrase from this file instead of prompting.
    /// `EDG_PASSPHRASE` takes precedence.
    #[arg(long, global = true)]
    passphrase_file: Option<PathBuf>,
    /// Emit JSON lines instead of human-readable text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a new identity in the keystore.
    Keygen {
        #[arg(long)]
        name: String,
    },
    /// Create a repository from a file.
    Init {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CHECKPOINT_INTERVAL)]
        interval: u64,
        /// Additional member as `<name-or-id>:<role>`; repeatable.
        #[arg(long = "member", value_name = "MEMBER:ROLE")]
        members: Vec<String>,
    },
    /// Commit a new version (defaults to the working copy).
    Commit {
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Reconstruct the version at a seq (defaults to head).
    Checkout {
        #[arg(long)]
        seq: Option<u64>,
        /// Output path; `-` writes to stdout. Defaults to the working copy.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List commits in ascending seq.
    Log,
    /// Audit the chain and the stored blobs.
    Verify,
    /// List ledger events from an event seq on.
    Events {
        #[arg(long, default_value_t = 0)]
        from: u64,
    },
    /// Give a member a role.
    Grant {
        #[arg(long)]
        member: String,
        #[arg(long)]
        role: Role,
    },
    /// Remove a member.
    Revoke {
        #[arg(long)]
        member: String,
    },
    /// Delete blobs no commit references.
    Gc,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoConfigFile {
    pub repo_id: RepoId,
    pub checkpoint_interval: u64,
    pub ledger: PathBuf,
    pub cas: PathBuf,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    NotFound(String),
    #[error("verification failed at seq {0:?}")]
    VerifyFailed(Vec<u64>),
    #[error(transparent)]
    Repo(#[from] repoclient::Error),
    #[error(transparent)]
    Keystore(#[from] keystore::Error),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
}

impl From<chainledger::Error> for CliError {
    fn from(e: chainledger::Error) -> Self {
        CliError::Repo(e.into())
    }
}

impl From<cas::Error> for CliError {
    fn from(e: cas::Error) -> Self {
        CliError::Repo(e.into())
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

fn classify_repo(err: &repoclient::Error) -> (&'static str, i32) {
    use chainledger::Error as L;
    use cryptbox::Error as C;
    use repoclient::Error as R;
    match err.root() {
        R::Ledger(e) => match e {
            L::PermissionDenied => ("permission_denied", EXIT_DENIED),
            L::BadSignature => ("bad_signature", EXIT_DENIED),
            L::CannotOrphanRepo => ("cannot_orphan_repo", EXIT_DENIED),
            L::CommitNotFound => ("commit_not_found", EXIT_NOT_FOUND),
            L::RepoNotFound(_) => ("repo_not_found", EXIT_NOT_FOUND),
            L::MemberNotFound(_) => ("member_not_found", EXIT_NOT_FOUND),
            L::InvalidConfig(_) => ("invalid_config", EXIT_USAGE),
            L::Corrupt(_) | L::CorruptRecord { .. } | L::ReplayDiverged(_) | L::MalformedRecord(_) => {
                ("ledger_corrupt", EXIT_INTEGRITY)
            }
            L::StaleParent => ("stale_parent", EXIT_INTERNAL),
            L::CheckpointRequired => ("checkpoint_required", EXIT_INTERNAL),
            L::RepoExists(_) => ("repo_exists", EXIT_INTERNAL),
            L::Io(_) => ("io", EXIT_INTERNAL),
        },
        R::Store(e) => match e {
            cas::Error::NotFound(_) => ("blob_missing", EXIT_INTEGRITY),
            cas::Error::IntegrityViolation(_) => ("integrity_violation", EXIT_INTEGRITY),
            cas::Error::CorruptPinSet(_) => ("corrupt_pin_set", EXIT_INTEGRITY),
            cas::Error::StorageFull | cas::Error::IoFailure(_) => ("io", EXIT_INTERNAL),
        },
        R::Crypto(e) => match e {
            C::NotARecipient => ("not_a_recipient", EXIT_DENIED),
            C::AuthenticationFailure => ("authentication_failure", EXIT_INTEGRITY),
            C::UnwrapFailure => ("unwrap_failure", EXIT_INTEGRITY),
            C::MalformedDekFile(_) | C::MalformedSealedBlob | C::MalformedKey | C::InvalidVersion => {
                ("malformed_key_material", EXIT_INTEGRITY)
            }
            _ => ("crypto", EXIT_INTERNAL),
        },
        R::Patch(e) => match e {
            patchset::Error::InputTooLarge { .. } => ("input_too_large", EXIT_USAGE),
            _ => ("malformed_patch", EXIT_INTEGRITY),
        },
        R::SegmentMismatch { .. } => ("segment_mismatch", EXIT_INTEGRITY),
        R::AtSeq { .. } => unreachable!("root strips seq annotations"),
    }
}

impl CliError {
    fn classify(&self) -> (&'static str, i32) {
        match self {
            CliError::Usage(_) => ("usage", EXIT_USAGE),
            CliError::NotFound(_) => ("not_found", EXIT_NOT_FOUND),
            CliError::VerifyFailed(_) => ("verify_failed", EXIT_INTEGRITY),
            CliError::Repo(e) => classify_repo(e),
            CliError::Keystore(e) => match e {
                keystore::Error::NotFound(_) => ("identity_not_found", EXIT_NOT_FOUND),
                keystore::Error::WrongPassphrase(_) => ("wrong_passphrase", EXIT_DENIED),
                keystore::Error::InvalidName(_) | keystore::Error::Exists(_) => ("usage", EXIT_USAGE),
                keystore::Error::Malformed { .. } => ("identity_corrupt", EXIT_INTEGRITY),
                keystore::Error::Crypto(_) | keystore::Error::Io(_) => ("internal", EXIT_INTERNAL),
            },
            CliError::Io { .. } => ("io", EXIT_INTERNAL),
        }
    }

    fn seq(&self) -> Option<u64> {
        match self {
            CliError::Repo(e) => e.seq(),
            _ => None,
        }
    }
}

struct Ctx {
    cli: Cli,
    out: Vec<Value>,
    human: Vec<String>,
}

impl Ctx {
    fn emit(&mut self, value: Value, human: String) {
        self.out.push(value);
        self.human.push(human);
    }

    fn edg_dir(&self) -> PathBuf {
        self.cli.repo.join(".edg")
    }

    fn keystore(&self) -> Result<Keystore, CliError> {
        Ok(Keystore::open(self.edg_dir().join("keystore"))?)
    }

    fn data_path(&self) -> PathBuf {
        self.cli.repo.join("data")
    }

    fn config(&self) -> Result<RepoConfigFile, CliError> {
        let path = self.edg_dir().join("config");
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(CliError::NotFound(format!(
                    "no repository at {} (run `edg init`)",
                    self.cli.repo.display()
                )))
            }
            Err(e) => return Err(io_err(format!("reading {}", path.display()))(e)),
        };
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.cli.repo.join(p)
        }
    }

    fn backends(&self, config: &RepoConfigFile) -> Result<(Arc<Ledger>, Arc<Store>), CliError> {
        let ledger = Ledger::open(self.resolve(&config.ledger))?;
        let store = Store::open(self.resolve(&config.cas))?;
        Ok((Arc::new(ledger), Arc::new(store)))
    }

    fn identity_name(&self) -> Result<&str, CliError> {
        self.cli
            .identity
            .as_deref()
            .ok_or_else(|| CliError::Usage("no identity given (use --identity or EDG_IDENTITY)".into()))
    }

    fn passphrase(&self, prompt: &str) -> Result<zeroize::Zeroizing<String>, CliError> {
        if let Ok(p) = std::env::var("EDG_PASSPHRASE") {
            return Ok(p.into());
        }
        if let Some(path) = &self.cli.passphrase_file {
            let text = fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
            return Ok(text.trim_end_matches(['\r', '\n']).to_string().into());
        }
        rpassword::prompt_password(prompt)
            .map(Into::into)
            .map_err(|e| CliError::Usage(format!("cannot read passphrase: {e}")))
    }

    fn unlock(&self) -> Result<Identity, CliError> {
        let name = self.identity_name()?;
        let ks = self.keystore()?;
        // fail on unknown names before prompting
        ks.public(name)?;
        let pass = self.passphrase(&format!("passphrase for {name}: "))?;
        Ok(ks.unlock(name, pass.as_bytes())?)
    }

    fn handle(&self) -> Result<RepositoryHandle, CliError> {
        let config = self.config()?;
        let (ledger, store) = self.backends(&config)?;
        let me = self.unlock()?;
        Ok(RepositoryHandle::open(ledger, store, config.repo_id, me)?)
    }

    fn member_id(&self, name_or_id: &str) -> Result<IdentityId, CliError> {
        match self.keystore()?.resolve(name_or_id) {
            Ok((_, public)) => Ok(public.id),
            Err(keystore::Error::NotFound(_)) => name_or_id
                .parse()
                .map_err(|_| CliError::NotFound(format!("no identity named {name_or_id:?}"))),
            Err(e) => Err(e.into()),
        }
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            CliError::Usage(format!("input file {} not found", path.display()))
        } else {
            io_err(format!("reading {}", path.display()))(e)
        }
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("edg-tmp");
    fs::write(&tmp, bytes).map_err(io_err(format!("writing {}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(io_err(format!("writing {}", path.display())))
}

fn event_json(event: &LedgerEvent) -> Value {
    let mut v = json!({
        "event_seq": event.event_seq,
        "timestamp": event.timestamp,
        "kind": event.kind(),
    });
    let obj = v.as_object_mut().expect("object literal");
    match &event.payload {
        EventPayload::RepoCreated { repo_id, owner, config } => {
            obj.insert("repo_id".into(), json!(repo_id));
            obj.insert("owner".into(), json!(owner));
            obj.insert("checkpoint_interval".into(), json!(config.checkpoint_interval));
            let members: Vec<Value> = config
                .roster
                .values()
                .map(|m| json!({"id": m.keys.id, "role": m.role.to_string()}))
                .collect();
            obj.insert("members".into(), Value::Array(members));
        }
        EventPayload::RoleSet { caller, member, change } => {
            obj.insert("caller".into(), json!(caller));
            obj.insert("member".into(), json!(member));
            let role = match change {
                RoleChange::Set { role, .. } => json!(role.to_string()),
                RoleChange::Remove => Value::Null,
            };
            obj.insert("role".into(), role);
        }
        EventPayload::Committed(rec) => {
            obj.insert("seq".into(), json!(rec.seq));
            obj.insert("commit_kind".into(), json!(rec.kind));
            obj.insert("cid".into(), json!(rec.cid));
            obj.insert("parent_cid".into(), json!(rec.parent_cid));
            obj.insert("dek_file_cid".into(), json!(rec.dek_file_cid));
            obj.insert("author_id".into(), json!(rec.author_id));
        }
    }
    v
}

fn event_human(event: &LedgerEvent) -> String {
    let kind = match event.kind() {
        EventKind::RepoCreated => "REPO_CREATED",
        EventKind::RoleSet => "ROLE_SET",
        EventKind::Committed => "COMMITTED",
    };
    let head = format!("#{:<4} {kind:<12}", event.event_seq);
    match &event.payload {
        EventPayload::RepoCreated { repo_id, owner, config } => format!(
            "{head} repo {repo_id} owner {owner} N={} members={}",
            config.checkpoint_interval,
            config.roster.len()
        ),
        EventPayload::RoleSet { member, change, .. } => match change {
            RoleChange::Set { role, .. } => format!("{head} {member} -> {role}"),
            RoleChange::Remove => format!("{head} {member} removed"),
        },
        EventPayload::Committed(rec) => format!("{head} seq {} {} {}", rec.seq, rec.kind, rec.cid),
    }
}

fn cmd_keygen(ctx: &mut Ctx, name: &str) -> Result<(), CliError> {
    let ks = ctx.keystore()?;
    if ks.contains(name) {
        return Err(keystore::Error::Exists(name.to_string()).into());
    }
    let pass = ctx.passphrase(&format!("new passphrase for {name}: "))?;
    let id = ks.generate(name, pass.as_bytes())?;
    let public = id.public();
    ctx.emit(
        json!({
            "name": name,
            "id": public.id,
            "signing_public": hex::encode(public.signing.to_sec1()),
            "encryption_public": hex::encode(public.encryption.to_sec1()),
        }),
        format!("created identity {name} ({})", public.id),
    );
    Ok(())
}

fn cmd_init(ctx: &mut Ctx, file: &Path, interval: u64, specs: &[String]) -> Result<(), CliError> {
    if ctx.edg_dir().join("config").exists() {
        return Err(CliError::Usage(format!(
            "{} is already a repository",
            ctx.cli.repo.display()
        )));
    }
    let plain = read_input(file)?;
    let ks = ctx.keystore()?;
    let owner = ctx.unlock()?;
    let mut members = vec![Member::new(Role::Owner, *owner.public())];
    for spec in specs {
        let (who, role) = spec
            .rsplit_once(':')
            .ok_or_else(|| CliError::Usage(format!("member {spec:?} must look like name:role")))?;
        let role: Role = role
            .parse()
            .map_err(|_| CliError::Usage(format!("unknown role {role:?}")))?;
        let (_, public) = ks.resolve(who)?;
        if public.id == owner.id() {
            return Err(CliError::Usage("the owner is added automatically".into()));
        }
        members.push(Member::new(role, public));
    }
    let config_tmp = RepoConfigFile {
        repo_id: RepoId::from_bytes([0; 32]),
        checkpoint_interval: interval,
        ledger: PathBuf::from(".edg/ledger"),
        cas: PathBuf::from(".edg/cas"),
    };
    let (ledger, store) = ctx.backends(&config_tmp)?;
    let handle = RepositoryHandle::init(ledger, store, owner, members, interval, &plain, now())?;
    let config = RepoConfigFile {
        repo_id: handle.repo_id(),
        ..config_tmp
    };
    let text = toml::to_string(&config).expect("config serializes");
    write_atomic(&ctx.edg_dir().join("config"), text.as_bytes())?;
    write_atomic(&ctx.data_path(), &plain)?;
    let head = handle.head()?.expect("init commits genesis");
    ctx.emit(
        json!({"repo_id": handle.repo_id(), "seq": head.seq, "kind": head.kind, "cid": head.cid}),
        format!("initialized repository {} (genesis {})", handle.repo_id(), head.cid),
    );
    Ok(())
}

fn cmd_commit(ctx: &mut Ctx, file: Option<&Path>) -> Result<(), CliError> {
    let data = ctx.data_path();
    let path = file.map_or(data.clone(), Path::to_path_buf);
    let plain = read_input(&path)?;
    let mut handle = ctx.handle()?;
    let rec = handle.commit(&plain, now())?;
    if path != data {
        write_atomic(&data, &plain)?;
    }
    ctx.emit(
        json!({"seq": rec.seq, "kind": rec.kind, "cid": rec.cid}),
        format!("committed seq {} ({}) {}", rec.seq, rec.kind, rec.cid),
    );
    Ok(())
}

fn cmd_checkout(ctx: &mut Ctx, seq: Option<u64>, out: Option<&Path>) -> Result<(), CliError> {
    let handle = ctx.handle()?;
    let seq = match seq {
        Some(s) => s,
        None => handle.head()?.ok_or(chainledger::Error::CommitNotFound)?.seq,
    };
    let (plain, stats) = handle.checkout_with_stats(seq)?;
    let out = out.map_or(ctx.data_path(), Path::to_path_buf);
    if out == Path::new("-") {
        io::stdout().write_all(&plain).map_err(io_err("writing stdout"))?;
        return Ok(());
    }
    write_atomic(&out, &plain)?;
    ctx.emit(
        json!({
            "seq": seq,
            "bytes": plain.len(),
            "segment_start": stats.segment_start,
            "patches_applied": stats.patches_applied,
            "out": out,
        }),
        format!(
            "wrote seq {seq} ({} bytes, {} patches applied) to {}",
            plain.len(),
            stats.patches_applied,
            out.display()
        ),
    );
    Ok(())
}

fn cmd_log(ctx: &mut Ctx) -> Result<(), CliError> {
    let config = ctx.config()?;
    let (ledger, _) = ctx.backends(&config)?;
    for rec in ledger.commits(&config.repo_id)? {
        ctx.emit(
            json!({
                "seq": rec.seq,
                "kind": rec.kind,
                "cid": rec.cid,
                "author_id": rec.author_id,
                "timestamp": rec.timestamp,
            }),
            format!(
                "{:>5}  {:<18} {}  {}  {}",
                rec.seq,
                rec.kind,
                rec.cid,
                &rec.author_id.to_hex()[..16],
                rec.timestamp
            ),
        );
    }
    Ok(())
}

fn cmd_verify(ctx: &mut Ctx) -> Result<(), CliError> {
    let config = ctx.config()?;
    let report = if ctx.cli.identity.is_some() {
        ctx.handle()?.verify()?
    } else {
        let (ledger, store) = ctx.backends(&config)?;
        ledger.verify_chain(&config.repo_id, |cid| store.stored_digest(cid).ok().flatten())?
    };
    let failing = report.failing_seqs();
    let mut value = serde_json::to_value(&report).expect("report serializes");
    value["ok"] = json!(report.verdict());
    value["failing_seqs"] = json!(failing);
    let mut human = vec![format!(
        "{} commits checked: {}",
        report.commits.len(),
        if report.verdict() { "ok" } else { "FAILED" }
    )];
    for c in report.commits.iter().filter(|c| !c.ok()) {
        let why: Vec<&str> = c.findings.iter().map(|f| f.describe()).collect();
        human.push(format!("  seq {}: {}", c.seq, why.join(", ")));
    }
    for p in &report.policy {
        human.push(format!("  event {}: {}", p.event_seq, p.reason));
    }
    if let Some(r) = &report.reconstruction {
        human.push(format!(
            "  head reconstruction: {}",
            serde_json::to_string(r).unwrap_or_default()
        ));
    }
    ctx.emit(value, human.join("\n"));
    if report.verdict() {
        Ok(())
    } else {
        Err(CliError::VerifyFailed(failing))
    }
}

fn cmd_events(ctx: &mut Ctx, from: u64) -> Result<(), CliError> {
    let config = ctx.config()?;
    let (ledger, _) = ctx.backends(&config)?;
    for event in ledger.events(&config.repo_id, from)? {
        ctx.emit(event_json(&event), event_human(&event));
    }
    Ok(())
}

fn cmd_grant(ctx: &mut Ctx, member: &str, role: Role) -> Result<(), CliError> {
    let (_, public) = ctx.keystore()?.resolve(member)?;
    let mut handle = ctx.handle()?;
    let anchor = handle.grant(public, role, now())?;
    ctx.emit(
        json!({
            "member": public.id,
            "role": role.to_string(),
            "anchor_seq": anchor.as_ref().map(|r| r.seq),
            "dek_file_version": handle.segment().map(|s| s.dek_file_version),
        }),
        match &anchor {
            Some(r) => format!("granted {role} to {} (anchored at seq {})", public.id, r.seq),
            None => format!("granted {role} to {}", public.id),
        },
    );
    Ok(())
}

fn cmd_revoke(ctx: &mut Ctx, member: &str) -> Result<(), CliError> {
    let id = ctx.member_id(member)?;
    let mut handle = ctx.handle()?;
    handle.revoke(&id, now())?;
    ctx.emit(
        json!({"member": id, "revoked": true}),
        format!("revoked {id}; the next commit starts a new segment"),
    );
    Ok(())
}

fn cmd_gc(ctx: &mut Ctx) -> Result<(), CliError> {
    let config = ctx.config()?;
    let (ledger, store) = ctx.backends(&config)?;
    let stats = repoclient::gc(&ledger, &store)?;
    ctx.emit(
        json!({"unpinned": stats.unpinned, "removed": stats.removed}),
        format!("unpinned {}, removed {} blobs", stats.unpinned, stats.removed),
    );
    Ok(())
}

fn dispatch(ctx: &mut Ctx) -> Result<(), CliError> {
    match std::mem::replace(&mut ctx.cli.command, Command::Log) {
        Command::Keygen { name } => cmd_keygen(ctx, &name),
        Command::Init {
            file,
            interval,
            members,
        } => cmd_init(ctx, &file, interval, &members),
        Command::Commit { file } => cmd_commit(ctx, file.as_deref()),
        Command::Checkout { seq, out } => cmd_checkout(ctx, seq, out.as_deref()),
        Command::Log => cmd_log(ctx),
        Command::Verify => cmd_verify(ctx),
        Command::Events { from } => cmd_events(ctx, from),
        Command::Grant { member, role } => cmd_grant(ctx, &member, role),
        Command::Revoke { member } => cmd_revoke(ctx, &member),
        Command::Gc => cmd_gc(ctx),
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let json_mode = cli.json;
    let mut ctx = Ctx {
        cli,
        out: Vec::new(),
        human: Vec::new(),
    };
    let result = dispatch(&mut ctx);

    let mut stdout = io::stdout().lock();
    if json_mode {
        for v in &ctx.out {
            let _ = writeln!(stdout, "{v}");
        }
    } else {
        for line in &ctx.human {
            let _ = writeln!(stdout, "{line}");
        }
    }
    let _ = stdout.flush();

    match result {
        Ok(()) => EXIT_OK,
        Err(err) => {
            let (kind, code) = err.classify();
            if json_mode {
                let v = json!({"error": {"kind": kind, "code": code, "message": err.to_string(), "seq": err.seq()}});
                eprintln!("{v}");
            } else if !matches!(err, CliError::VerifyFailed(_)) {
                eprintln!("edg: {err}");
            }
            code
        }
    }
}
