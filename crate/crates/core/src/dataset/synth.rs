//! Desk-scale synthetic commits.
//!
//! Every commit edits a small randomly generated C file. Fixing commits
//! tighten the bound check guarding a buffer write. Non-fixing commits
//! either apply the very same kind of bound edit to a guard around a scalar
//! update, or perform a refactor that never touches a condition (rename,
//! constant tweak, swap of independent statements, added or removed logging
//! call). Only the guarded statement, which is unchanged code, tells a
//! tightened buffer guard apart from a tightened scalar guard.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CommitRecord, FileChange, Label};

const INDEX_VARS: &[&str] = &["i", "j", "k", "idx", "pos", "off"];
const LIMITS: &[&str] = &["BUF_SIZE", "MAX_LEN", "CAPACITY", "LIMIT", "N_SLOTS", "TABLE_SZ"];
const BUFFERS: &[&str] = &["buf", "dst", "out", "table", "slots", "cache"];
const SOURCES: &[&str] = &["data", "src", "input", "vals"];
const SCALARS: &[&str] = &["total", "count", "sum", "acc", "hits", "score", "width"];
const FUNCS: &[&str] = &["fill", "copy", "scan", "load", "pack", "store", "merge", "parse", "encode"];
const SUFFIXES: &[&str] = &["block", "entries", "frame", "record", "input", "chunk", "row"];
const LOGGERS: &[&str] = &["log_value", "trace", "debug_print", "note"];
const RENAMES: &[&str] = &["result", "tally", "amount", "nbytes", "weight", "level"];

/// The kind of edit a synthetic commit applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EditKind {
    /// Tightened bound on a guard protecting a buffer write.
    BoundFix,
    /// Same bound edit on a guard protecting a scalar update.
    ScalarGuard,
    Rename,
    ConstantTweak,
    Reorder,
    AddCall,
    RemoveCall,
}

impl EditKind {
    pub fn is_fix(self) -> bool {
        self == EditKind::BoundFix
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCommit {
    pub record: CommitRecord,
    pub edit: EditKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Scaled,
    Le,
    Lt,
    Len,
    LenAndLimit,
    NonNeg,
    NonNegAndLimit,
}

impl Bound {
    const ALL: [Bound; 7] =
        [Bound::Scaled, Bound::Le, Bound::Lt, Bound::Len, Bound::LenAndLimit, Bound::NonNeg, Bound::NonNegAndLimit];
    const WEAK: [Bound; 4] = [Bound::Scaled, Bound::Le, Bound::Len, Bound::NonNeg];

    fn tightened(self) -> Bound {
        match self {
            Bound::Scaled | Bound::Le => Bound::Lt,
            Bound::Len => Bound::LenAndLimit,
            Bound::NonNeg => Bound::NonNegAndLimit,
            other => other,
        }
    }

    fn render(self, var: &str, limit: &str) -> String {
        match self {
            Bound::Scaled => format!("{var} < 2*{limit}"),
            Bound::Le => format!("{var} <= {limit}"),
            Bound::Lt => format!("{var} < {limit}"),
            Bound::Len => format!("{var} < len"),
            Bound::LenAndLimit => format!("{var} < len && {var} < {limit}"),
            Bound::NonNeg => format!("{var} >= 0"),
            Bound::NonNegAndLimit => format!("{var} >= 0 && {var} < {limit}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    If,
    For,
    While,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Body {
    Write { buf: String, src: String },
    Scalar { var: String, step: i32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Item {
    Decl { var: String, init: i32 },
    Accum { var: String, src: String, k: i32 },
    Call { func: String, arg: String },
    Guard { shape: Shape, var: String, limit: String, bound: Bound, body: Body },
    Return { var: String },
}

#[derive(Debug, Clone)]
struct Function {
    name: String,
    buf: String,
    src: String,
    index_vars: Vec<String>,
    items: Vec<Item>,
}

impl Function {
    fn render(&self, out: &mut Vec<String>) {
        out.push(format!("int {}(char {}[], int {}[], int len) {{", self.name, self.buf, self.src));
        for v in &self.index_vars {
            out.push(format!("  int {v} = 0;"));
        }
        for item in &self.items {
            match item {
                Item::Decl { var, init } => out.push(format!("  int {var} = {init};")),
                Item::Accum { var, src, k } => out.push(format!("  {var} = {var} + {src}[{k}];")),
                Item::Call { func, arg } => out.push(format!("  {func}({arg});")),
                Item::Return { var } => out.push(format!("  return {var};")),
                Item::Guard { shape, var, limit, bound, body } => {
                    let cond = bound.render(var, limit);
                    let stmt = match body {
                        Body::Write { buf, src } => format!("{buf}[{var}] = {src}[{var}];"),
                        Body::Scalar { var: s, step } => format!("{s} = {s} + {step};"),
                    };
                    match shape {
                        Shape::If => {
                            out.push(format!("  if ({cond})"));
                            out.push(format!("    {stmt}"));
                        }
                        Shape::For => {
                            out.push(format!("  for ({var} = 0; {cond}; {var}++)"));
                            out.push(format!("    {stmt}"));
                        }
                        Shape::While => {
                            out.push(format!("  while ({cond}) {{"));
                            out.push(format!("    {stmt}"));
                            out.push(format!("    {var}++;"));
                            out.push("  }".to_string());
                        }
                    }
                }
            }
        }
        out.push("}".to_string());
    }

    fn scalars(&self) -> Vec<String> {
        self.items
            .iter()
            .filter_map(|it| match it {
                Item::Decl { var, .. } => Some(var.clone()),
                _ => None,
            })
            .collect()
    }

    fn guards(&self, write: bool) -> Vec<usize> {
        (0..self.items.len())
            .filter(|&i| match &self.items[i] {
                Item::Guard { body: Body::Write { .. }, .. } => write,
                Item::Guard { body: Body::Scalar { .. }, .. } => !write,
                _ => false,
            })
            .collect()
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).expect("non-empty pool")
}

fn gen_function(rng: &mut ChaCha8Rng, used_names: &mut Vec<String>) -> Function {
    let name = loop {
        let n = format!("{}_{}", pick(rng, FUNCS), pick(rng, SUFFIXES));
        if !used_names.contains(&n) {
            used_names.push(n.clone());
            break n;
        }
    };
    let buf = pick(rng, BUFFERS).to_string();
    let src = pick(rng, SOURCES).to_string();

    let mut scalar_pool: Vec<&str> = SCALARS.to_vec();
    scalar_pool.shuffle(rng);
    let scalars: Vec<String> = scalar_pool[..rng.gen_range(1..=2)].iter().map(|s| s.to_string()).collect();
    let mut index_pool: Vec<&str> = INDEX_VARS.to_vec();
    index_pool.shuffle(rng);
    let index_vars: Vec<String> = index_pool[..rng.gen_range(1..=2)].iter().map(|s| s.to_string()).collect();

    let guard = |rng: &mut ChaCha8Rng, write: bool| -> Item {
        let shape = *[Shape::If, Shape::For, Shape::While].choose(rng).unwrap();
        let body = if write {
            Body::Write { buf: buf.clone(), src: src.clone() }
        } else {
            Body::Scalar { var: scalars.choose(rng).unwrap().clone(), step: rng.gen_range(1..=9) }
        };
        Item::Guard {
            shape,
            var: index_vars.choose(rng).unwrap().clone(),
            limit: pick(rng, LIMITS).to_string(),
            bound: *Bound::ALL.choose(rng).unwrap(),
            body,
        }
    };

    let mut middle = vec![guard(rng, true), guard(rng, false)];
    if rng.gen_bool(0.5) {
        let write = rng.gen_bool(0.5);
        middle.push(guard(rng, write));
    }
    for _ in 0..rng.gen_range(1..=3) {
        middle.push(Item::Accum {
            var: scalars.choose(rng).unwrap().clone(),
            src: src.clone(),
            k: rng.gen_range(0..8),
        });
    }
    for _ in 0..rng.gen_range(0..=2) {
        middle.push(Item::Call { func: pick(rng, LOGGERS).to_string(), arg: scalars.choose(rng).unwrap().clone() });
    }
    middle.shuffle(rng);

    let mut items: Vec<Item> =
        scalars.iter().map(|v| Item::Decl { var: v.clone(), init: rng.gen_range(0..4) }).collect();
    items.extend(middle);
    items.push(Item::Return { var: scalars[0].clone() });
    Function { name, buf, src, index_vars, items }
}

fn render(funcs: &[Function]) -> String {
    let mut lines = Vec::new();
    for (i, f) in funcs.iter().enumerate() {
        if i > 0 {
            lines.push(String::new());
        }
        f.render(&mut lines);
    }
    lines.push(String::new());
    lines.join("\n")
}

/// Applies `kind` to one function, returning the edited copy, or `None` if
/// the function offers no site for that edit.
fn apply(rng: &mut ChaCha8Rng, f: &Function, kind: EditKind) -> Option<(Function, Function)> {
    let mut before = f.clone();
    let mut after = f.clone();
    match kind {
        EditKind::BoundFix | EditKind::ScalarGuard => {
            let sites = f.guards(kind == EditKind::BoundFix);
            let &site = sites.choose(rng)?;
            let weak = *Bound::WEAK.choose(rng).unwrap();
            if let Item::Guard { bound, .. } = &mut before.items[site] {
                *bound = weak;
            }
            if let Item::Guard { bound, .. } = &mut after.items[site] {
                *bound = weak.tightened();
            }
        }
        EditKind::Rename => {
            let old = f.scalars().choose(rng)?.clone();
            let new = RENAMES.iter().find(|r| !f.scalars().iter().any(|s| s == *r))?.to_string();
            for item in &mut after.items {
                match item {
                    Item::Decl { var, .. } | Item::Accum { var, .. } | Item::Return { var } => {
                        if *var == old {
                            *var = new.clone();
                        }
                    }
                    Item::Call { arg, .. } if *arg == old => *arg = new.clone(),
                    Item::Guard { body: Body::Scalar { var, .. }, .. } if *var == old => *var = new.clone(),
                    _ => {}
                }
            }
        }
        EditKind::ConstantTweak => {
            let sites: Vec<usize> =
                (0..f.items.len()).filter(|&i| matches!(f.items[i], Item::Accum { .. } | Item::Decl { .. })).collect();
            let &site = sites.choose(rng)?;
            let delta = rng.gen_range(1..=3);
            match &mut after.items[site] {
                Item::Accum { k, .. } => *k += delta,
                Item::Decl { init, .. } => *init += delta,
                _ => unreachable!(),
            }
        }
        EditKind::Reorder => {
            // Adjacent accumulations into different variables, or an
            // accumulation next to a call on an unrelated variable.
            let sites: Vec<usize> =
                (0..f.items.len().saturating_sub(1)).filter(|&i| independent(&f.items[i], &f.items[i + 1])).collect();
            let &site = sites.choose(rng)?;
            after.items.swap(site, site + 1);
        }
        EditKind::AddCall | EditKind::RemoveCall => {
            let scalars = f.scalars();
            let call = Item::Call { func: pick(rng, LOGGERS).to_string(), arg: scalars.choose(rng)?.clone() };
            // Insert after the declarations, before the return.
            let lo = scalars.len();
            let hi = f.items.len() - 1;
            let at = rng.gen_range(lo..=hi);
            let (with, without) =
                if kind == EditKind::AddCall { (&mut after, &mut before) } else { (&mut before, &mut after) };
            with.items.insert(at, call);
            let _ = without;
        }
    }
    if before.items == after.items {
        return None;
    }
    Some((before, after))
}

fn independent(a: &Item, b: &Item) -> bool {
    match (a, b) {
        (Item::Accum { var: x, .. }, Item::Accum { var: y, .. }) => x != y,
        (Item::Accum { var: x, .. }, Item::Call { arg: y, .. })
        | (Item::Call { arg: y, .. }, Item::Accum { var: x, .. }) => x != y,
        (Item::Call { .. }, Item::Call { .. }) => a != b,
        _ => false,
    }
}

const BENIGN: [EditKind; 5] =
    [EditKind::Rename, EditKind::ConstantTweak, EditKind::Reorder, EditKind::AddCall, EditKind::RemoveCall];

fn gen_commit(rng: &mut ChaCha8Rng, label: Label) -> (Vec<FileChange>, EditKind) {
    loop {
        let mut names = Vec::new();
        let funcs: Vec<Function> = (0..rng.gen_range(1..=2)).map(|_| gen_function(rng, &mut names)).collect();
        let primary = match label {
            Label::Fix => EditKind::BoundFix,
            Label::NonFix if rng.gen_bool(0.4) => EditKind::ScalarGuard,
            Label::NonFix => *BENIGN.choose(rng).unwrap(),
        };
        let target = rng.gen_range(0..funcs.len());
        let Some((fb, fa)) = apply(rng, &funcs[target], primary) else {
            continue;
        };
        let mut before = funcs.clone();
        let mut after = funcs.clone();
        before[target] = fb;
        after[target] = fa;

        // Occasionally a second, unrelated refactor rides along.
        if rng.gen_bool(0.25) {
            let other = rng.gen_range(0..funcs.len());
            let kind = *BENIGN.choose(rng).unwrap();
            if other != target {
                if let Some((ob, oa)) = apply(rng, &funcs[other], kind) {
                    before[other] = ob;
                    after[other] = oa;
                }
            }
        }

        let mut files = vec![FileChange { path: "src/core.c".into(), before: render(&before), after: render(&after) }];
        if rng.gen_bool(0.15) {
            let mut names = Vec::new();
            let helper = gen_function(rng, &mut names);
            let kind = *BENIGN.choose(rng).unwrap();
            let (hb, ha) = apply(rng, &helper, kind).unwrap_or_else(|| (helper.clone(), helper.clone()));
            files.push(FileChange { path: "src/util.c".into(), before: render(&[hb]), after: render(&[ha]) });
        }
        return (files, primary);
    }
}

/// Generates `n_fix` fixing and `n_nonfix` non-fixing commits with strictly
/// increasing timestamps and shuffled labels. Deterministic in `seed`.
pub fn gen_synthetic(n_fix: usize, n_nonfix: usize, seed: u64) -> Vec<CommitRecord> {
    gen_synthetic_detailed(n_fix, n_nonfix, seed).into_iter().map(|c| c.record).collect()
}

/// Like [`gen_synthetic`], also reporting which edit each commit applies.
pub fn gen_synthetic_detailed(n_fix: usize, n_nonfix: usize, seed: u64) -> Vec<SyntheticCommit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<Label> =
        std::iter::repeat_n(Label::Fix, n_fix).chain(std::iter::repeat_n(Label::NonFix, n_nonfix)).collect();
    labels.shuffle(&mut rng);
    let mut timestamp: i64 = 1_262_304_000;
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            timestamp += rng.gen_range(60..86_400);
            let (files, edit) = gen_commit(&mut rng, label);
            let record = CommitRecord::new(format!("syn{seed}-{i:06}"), timestamp, label, files);
            SyntheticCommit { record, edit }
        })
        .collect()
}
