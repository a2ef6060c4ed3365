//! Coteries: pairwise-intersecting, mutually non-contained quorum families.
//!
//! Each process `P_i` is assigned one constant quorum `Q_i`. The reader set
//! `R_i = { P_k | P_i ∈ Q_k }` is derived from the assignment and names the
//! processes that report their state changes to `P_i`.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Identity of a process, `1..=n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessId(u32);

impl ProcessId {
    /// Panics on zero; ids are one-based.
    pub fn new(id: u32) -> Self {
        assert!(id >= 1, "process ids are one-based");
        ProcessId(id)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Zero-based index for vector storage.
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn from_index(index: usize) -> Self {
        ProcessId(index as u32 + 1)
    }

    /// All processes `P_1..=P_n`.
    pub fn all(n: usize) -> impl Iterator<Item = ProcessId> + Clone {
        (0..n).map(ProcessId::from_index)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Renders a process set as `{1,2,5}`.
pub fn format_set(set: &BTreeSet<ProcessId>) -> String {
    let items: Vec<String> = set.iter().map(|p| p.to_string()).collect();
    format!("{{{}}}", items.join(","))
}

/// A non-empty set of processes.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quorum(BTreeSet<ProcessId>);

impl Quorum {
    pub fn new(members: impl IntoIterator<Item = ProcessId>) -> Result<Self, CoterieError> {
        let members: BTreeSet<ProcessId> = members.into_iter().collect();
        if members.is_empty() {
            return Err(CoterieError::EmptyQuorum);
        }
        Ok(Quorum(members))
    }

    pub fn members(&self) -> &BTreeSet<ProcessId> {
        &self.0
    }

    pub fn contains(&self, p: ProcessId) -> bool {
        self.0.contains(&p)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ProcessId> + '_ {
        self.0.iter().copied()
    }

    pub fn intersects(&self, other: &Quorum) -> bool {
        self.0.intersection(&other.0).next().is_some()
    }

    pub fn is_subset(&self, other: &Quorum) -> bool {
        self.0.is_subset(&other.0)
    }
}

impl fmt::Display for Quorum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_set(&self.0))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoterieError {
    #[error("grid coterie needs a perfect-square process count, got {0}")]
    NotSquare(usize),
    #[error("a coterie needs at least one process")]
    NoProcesses,
    #[error("quorum must not be empty")]
    EmptyQuorum,
    #[error("process {id} is outside 1..={n}")]
    OutOfRange { id: u32, n: usize },
    #[error("expected {expected} quorums, one per process, got {got}")]
    WrongQuorumCount { expected: usize, got: usize },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// The per-process quorum assignment together with the derived reader sets.
///
/// Construction does not check the coterie properties; use [`verify_coterie`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoterieAssignment {
    n: usize,
    quorums: Vec<Arc<Quorum>>,
    readers: Vec<BTreeSet<ProcessId>>,
}

impl CoterieAssignment {
    /// `quorums[i]` is the quorum of `P_{i+1}`.
    pub fn from_quorums(n: usize, quorums: Vec<Quorum>) -> Result<Self, CoterieError> {
        if n == 0 {
            return Err(CoterieError::NoProcesses);
        }
        if quorums.len() != n {
            return Err(CoterieError::WrongQuorumCount { expected: n, got: quorums.len() });
        }
        for q in &quorums {
            if let Some(bad) = q.iter().find(|p| p.index() >= n) {
                return Err(CoterieError::OutOfRange { id: bad.get(), n });
            }
        }
        let mut readers = vec![BTreeSet::new(); n];
        for (k, q) in quorums.iter().enumerate() {
            for member in q.iter() {
                readers[member.index()].insert(ProcessId::from_index(k));
            }
        }
        Ok(CoterieAssignment { n, quorums: quorums.into_iter().map(Arc::new).collect(), readers })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn quorum(&self, p: ProcessId) -> &Quorum {
        &self.quorums[p.index()]
    }

    pub(crate) fn shared_quorum(&self, p: ProcessId) -> Arc<Quorum> {
        Arc::clone(&self.quorums[p.index()])
    }

    /// `R_i`: the processes whose quorum contains `p`.
    pub fn readers(&self, p: ProcessId) -> &BTreeSet<ProcessId> {
        &self.readers[p.index()]
    }

    /// `|Q|`, the largest quorum size.
    pub fn max_quorum_size(&self) -> usize {
        self.quorums.iter().map(|q| q.len()).max().unwrap_or(0)
    }

    /// The set of distinct quorums, in ascending order.
    pub fn distinct_quorums(&self) -> Vec<&Quorum> {
        let set: BTreeSet<&Quorum> = self.quorums.iter().map(|q| q.as_ref()).collect();
        set.into_iter().collect()
    }

    /// One line per process, `i: j1 j2 ... jm`, ids ascending.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in ProcessId::all(self.n) {
            let members: Vec<String> = self.quorum(p).iter().map(|m| m.to_string()).collect();
            out.push_str(&format!("{}: {}\n", p, members.join(" ")));
        }
        out
    }

    /// Parses the line format written by [`to_text`](Self::to_text).
    /// Blank lines and `#` comments are skipped; every process `1..=n` must
    /// appear exactly once, where `n` is the number of entries.
    pub fn parse_text(text: &str) -> Result<Self, CoterieError> {
        let mut entries: Vec<(usize, u32, Vec<u32>)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let line_no = lineno + 1;
            let parse_err = |reason: String| CoterieError::Parse { line: line_no, reason };
            let (head, tail) = line.split_once(':').ok_or_else(|| parse_err("expected `i: j1 j2 ...`".into()))?;
            let id: u32 = head.trim().parse().map_err(|_| parse_err(format!("bad process id `{}`", head.trim())))?;
            let members = tail
                .split_whitespace()
                .map(|tok| tok.parse::<u32>().map_err(|_| parse_err(format!("bad member `{tok}`"))))
                .collect::<Result<Vec<u32>, _>>()?;
            entries.push((line_no, id, members));
        }
        let n = entries.len();
        if n == 0 {
            return Err(CoterieError::NoProcesses);
        }
        let mut slots: Vec<Option<Quorum>> = vec![None; n];
        for (line, id, members) in entries {
            if id == 0 || id as usize > n {
                return Err(CoterieError::OutOfRange { id, n });
            }
            if members.contains(&0) {
                return Err(CoterieError::OutOfRange { id: 0, n });
            }
            let slot = &mut slots[id as usize - 1];
            if slot.is_some() {
                return Err(CoterieError::Parse { line, reason: format!("process {id} listed twice") });
            }
            *slot = Some(Quorum::new(members.into_iter().map(ProcessId::new))?);
        }
        let quorums = slots.into_iter().map(|q| q.expect("every slot filled")).collect();
        CoterieAssignment::from_quorums(n, quorums)
    }
}

/// Grid coterie over an `r × r` row-major layout: `Q_i` is the row of `P_i`
/// united with its column, so `|Q_i| = 2r − 1`.
pub fn build_grid_coterie(n: usize) -> Result<CoterieAssignment, CoterieError> {
    if n == 0 {
        return Err(CoterieError::NoProcesses);
    }
    let r = (n as f64).sqrt().round() as usize;
    if r * r != n {
        return Err(CoterieError::NotSquare(n));
    }
    let quorums = (0..n)
        .map(|idx| {
            let (row, col) = (idx / r, idx % r);
            let row_members = (0..r).map(move |c| row * r + c);
            let col_members = (0..r).map(move |rr| rr * r + col);
            Quorum::new(row_members.chain(col_members).map(ProcessId::from_index))
        })
        .collect::<Result<Vec<_>, _>>()?;
    CoterieAssignment::from_quorums(n, quorums)
}

/// Majority coterie: `Q_i` is the lexicographically first set of
/// `⌊n/2⌋ + 1` processes that contains `P_i`.
pub fn build_majority_coterie(n: usize) -> Result<CoterieAssignment, CoterieError> {
    if n == 0 {
        return Err(CoterieError::NoProcesses);
    }
    let size = n / 2 + 1;
    let quorums = (1..=n as u32)
        .map(|i| {
            if i as usize <= size {
                Quorum::new((1..=size as u32).map(ProcessId::new))
            } else {
                Quorum::new((1..size as u32).chain(std::iter::once(i)).map(ProcessId::new))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    CoterieAssignment::from_quorums(n, quorums)
}

/// The degenerate coterie `{V}`.
pub fn build_single_quorum_coterie(n: usize) -> Result<CoterieAssignment, CoterieError> {
    if n == 0 {
        return Err(CoterieError::NoProcesses);
    }
    let all = Quorum::new(ProcessId::all(n))?;
    CoterieAssignment::from_quorums(n, vec![all; n])
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CoterieViolation {
    Disjoint { first: Quorum, second: Quorum },
    Contained { subset: Quorum, superset: Quorum },
}

impl fmt::Display for CoterieViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoterieViolation::Disjoint { first, second } => {
                write!(f, "quorums {first} and {second} do not intersect")
            }
            CoterieViolation::Contained { subset, superset } => {
                write!(f, "quorum {subset} is contained in {superset}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoterieReport {
    pub violations: Vec<CoterieViolation>,
}

impl CoterieReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Brute-force check of intersection and minimality over the distinct quorums.
pub fn verify_coterie(c: &CoterieAssignment) -> CoterieReport {
    let distinct = c.distinct_quorums();
    let mut violations = Vec::new();
    for (a, qa) in distinct.iter().enumerate() {
        for qb in distinct.iter().skip(a + 1) {
            if !qa.intersects(qb) {
                violations.push(CoterieViolation::Disjoint { first: (*qa).clone(), second: (*qb).clone() });
            }
        }
    }
    for qa in &distinct {
        for qb in &distinct {
            if qa != qb && qa.is_subset(qb) {
                violations.push(CoterieViolation::Contained { subset: (*qa).clone(), superset: (*qb).clone() });
            }
        }
    }
    CoterieReport { violations }
}

/// The coterie families the harness can construct by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoterieKind {
    Grid,
    Majority,
    Single,
}

impl CoterieKind {
    pub fn build(self, n: usize) -> Result<CoterieAssignment, CoterieError> {
        match self {
            CoterieKind::Grid => build_grid_coterie(n),
            CoterieKind::Majority => build_majority_coterie(n),
            CoterieKind::Single => build_single_quorum_coterie(n),
        }
    }
}

impl std::str::FromStr for CoterieKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grid" => Ok(CoterieKind::Grid),
            "majority" => Ok(CoterieKind::Majority),
            "single" => Ok(CoterieKind::Single),
            other => Err(format!("unknown coterie `{other}` (grid, majority, single)")),
        }
    }
}
