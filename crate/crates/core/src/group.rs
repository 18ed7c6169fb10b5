//! Finite groups given by multiplication tables, with the subgroup machinery
//! the limit engine needs: cosets, sections, conjugation and normal closure.

use std::collections::BTreeSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Dense element index in `0..order`.
pub type Element = usize;

/// Largest order for which associativity is checked on every triple.
pub const EXHAUSTIVE_ASSOC_LIMIT: usize = 256;

/// Default bound for [`enumerate_subgroups`].
pub const DEFAULT_SUBGROUP_BOUND: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupError {
    #[error("multiplication table is empty")]
    Empty,
    #[error("row {row} has {len} entries, expected {expected}")]
    NotSquare {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("entry mul({a}, {b}) = {value} is out of range for order {order}")]
    OutOfRange {
        a: Element,
        b: Element,
        value: usize,
        order: usize,
    },
    #[error("no two-sided identity element (candidate {candidate:?} fails)")]
    NoIdentity { candidate: Option<Element> },
    #[error("element {element} has no two-sided inverse")]
    NoInverse { element: Element },
    #[error("not associative: ({a}*{b})*{c} = {left} but {a}*({b}*{c}) = {right}")]
    NotAssociative {
        a: Element,
        b: Element,
        c: Element,
        left: Element,
        right: Element,
    },
    #[error("group order {order} exceeds the bound {bound}")]
    OrderTooLarge { order: usize, bound: usize },
    #[error("not a subgroup: {0}")]
    NotASubgroup(String),
    #[error("{0} labels given for a group of order {1}")]
    LabelCount(usize, usize),
    #[error("no element labelled {0:?}")]
    UnknownLabel(String),
}

/// A finite group stored as a dense Cayley table.
#[derive(Clone, PartialEq, Eq)]
pub struct FiniteGroup {
    order: usize,
    mul: Vec<Element>,
    inv: Vec<Element>,
    identity: Element,
    labels: Option<Vec<String>>,
}

impl fmt::Debug for FiniteGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteGroup")
            .field("order", &self.order)
            .field("identity", &self.identity)
            .finish_non_exhaustive()
    }
}

impl FiniteGroup {
    /// Validates a Cayley table and derives identity and inverses.
    ///
    /// Checks run in the order identity, associativity, inverses, so a single
    /// corrupted cell is usually reported as an associativity witness.
    pub fn from_table(
        table: &[Vec<Element>],
        identity_hint: Option<Element>,
    ) -> Result<Self, GroupError> {
        let n = table.len();
        if n == 0 {
            return Err(GroupError::Empty);
        }
        let mut mul = Vec::with_capacity(n * n);
        for (a, row) in table.iter().enumerate() {
            if row.len() != n {
                return Err(GroupError::NotSquare {
                    row: a,
                    len: row.len(),
                    expected: n,
                });
            }
            for (b, &value) in row.iter().enumerate() {
                if value >= n {
                    return Err(GroupError::OutOfRange {
                        a,
                        b,
                        value,
                        order: n,
                    });
                }
                mul.push(value);
            }
        }
        Self::from_flat(n, mul, identity_hint)
    }

    pub(crate) fn from_flat(
        n: usize,
        mul: Vec<Element>,
        identity_hint: Option<Element>,
    ) -> Result<Self, GroupError> {
        debug_assert_eq!(mul.len(), n * n);
        let is_identity = |e: Element| (0..n).all(|g| mul[e * n + g] == g && mul[g * n + e] == g);
        let identity = match identity_hint {
            Some(e) => {
                if e >= n || !is_identity(e) {
                    return Err(GroupError::NoIdentity { candidate: Some(e) });
                }
                e
            }
            None => (0..n)
                .find(|&e| is_identity(e))
                .ok_or(GroupError::NoIdentity { candidate: None })?,
        };

        let at = |a: Element, b: Element| mul[a * n + b];
        if n <= EXHAUSTIVE_ASSOC_LIMIT {
            for a in 0..n {
                for b in 0..n {
                    let ab = at(a, b);
                    for c in 0..n {
                        let left = at(ab, c);
                        let right = at(a, at(b, c));
                        if left != right {
                            return Err(GroupError::NotAssociative {
                                a,
                                b,
                                c,
                                left,
                                right,
                            });
                        }
                    }
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x6173_736f_6369_6174);
            for _ in 0..10 * n * n {
                let (a, b, c) = (
                    rng.random_range(0..n),
                    rng.random_range(0..n),
                    rng.random_range(0..n),
                );
                let left = at(at(a, b), c);
                let right = at(a, at(b, c));
                if left != right {
                    return Err(GroupError::NotAssociative {
                        a,
                        b,
                        c,
                        left,
                        right,
                    });
                }
            }
        }

        let mut inv = Vec::with_capacity(n);
        for g in 0..n {
            let x = (0..n)
                .find(|&x| at(g, x) == identity && at(x, g) == identity)
                .ok_or(GroupError::NoInverse { element: g })?;
            inv.push(x);
        }

        Ok(Self {
            order: n,
            mul,
            inv,
            identity,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, GroupError> {
        if labels.len() != self.order {
            return Err(GroupError::LabelCount(labels.len(), self.order));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// The cyclic group Z_n with element `i` standing for `i mod n`.
    pub fn cyclic(n: usize) -> Result<Self, GroupError> {
        if n == 0 {
            return Err(GroupError::Empty);
        }
        let mul = (0..n * n).map(|ij| (ij / n + ij % n) % n).collect();
        Self::from_flat(n, mul, Some(0))
    }

    /// The symmetric group on `k` letters. Elements are the permutations in
    /// lexicographic order of their images (identity first), composed as
    /// `(s*t)(i) = s(t(i))`. Labels use 1-based cycle notation.
    pub fn symmetric(k: usize) -> Result<Self, GroupError> {
        if k == 0 {
            return Err(GroupError::Empty);
        }
        if k > 5 {
            return Err(GroupError::OrderTooLarge {
                order: (1..=k).product(),
                bound: 120,
            });
        }
        let perms = permutations(k);
        let index = |p: &[usize]| perms.binary_search_by(|q| q.as_slice().cmp(p)).unwrap();
        let n = perms.len();
        let mut mul = Vec::with_capacity(n * n);
        for s in &perms {
            for t in &perms {
                let st: Vec<usize> = (0..k).map(|i| s[t[i]]).collect();
                mul.push(index(&st));
            }
        }
        let labels = perms.iter().map(|p| cycle_label(p)).collect();
        Self::from_flat(n, mul, Some(0))?.with_labels(labels)
    }

    /// The dihedral group of order `2m`; element `i + m*j` is `r^i s^j`.
    pub fn dihedral(m: usize) -> Result<Self, GroupError> {
        if m == 0 {
            return Err(GroupError::Empty);
        }
        let n = 2 * m;
        let mut mul = Vec::with_capacity(n * n);
        for x in 0..n {
            let (a, b) = (x % m, x / m);
            for y in 0..n {
                let (c, d) = (y % m, y / m);
                let rot = if b == 0 { (a + c) % m } else { (a + m - c) % m };
                mul.push(rot + m * ((b + d) % 2));
            }
        }
        let labels = (0..n)
            .map(|x| {
                let (a, b) = (x % m, x / m);
                match (a, b) {
                    (0, 0) => "e".to_string(),
                    (a, 0) => format!("r{a}"),
                    (0, _) => "s".to_string(),
                    (a, _) => format!("r{a}s"),
                }
            })
            .collect();
        Self::from_flat(n, mul, Some(0))?.with_labels(labels)
    }

    /// The quaternion group, elements ordered 1, -1, i, -i, j, -j, k, -k.
    pub fn quaternion() -> Result<Self, GroupError> {
        // unit index u in {0:1, 1:i, 2:j, 3:k}; element = 2*u + sign
        const UNIT: [[(usize, bool); 4]; 4] = [
            [(0, false), (1, false), (2, false), (3, false)],
            [(1, false), (0, true), (3, false), (2, true)],
            [(2, false), (3, true), (0, true), (1, false)],
            [(3, false), (2, false), (1, true), (0, true)],
        ];
        let mut mul = Vec::with_capacity(64);
        for x in 0..8 {
            for y in 0..8 {
                let (u, v) = (x / 2, y / 2);
                let (w, neg) = UNIT[u][v];
                let sign = (x % 2) ^ (y % 2) ^ usize::from(neg);
                mul.push(2 * w + sign);
            }
        }
        let labels = ["1", "-1", "i", "-i", "j", "-j", "k", "-k"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        Self::from_flat(8, mul, Some(0))?.with_labels(labels)
    }

    /// Direct product; element `(a, b)` has index `a * |B| + b`.
    pub fn direct_product(a: &FiniteGroup, b: &FiniteGroup) -> Result<Self, GroupError> {
        let (na, nb) = (a.order, b.order);
        let n = na * nb;
        let mut mul = Vec::with_capacity(n * n);
        for x in 0..n {
            for y in 0..n {
                mul.push(a.mul(x / nb, y / nb) * nb + b.mul(x % nb, y % nb));
            }
        }
        let group = Self::from_flat(n, mul, Some(a.identity * nb + b.identity))?;
        let labels = (0..n)
            .map(|x| format!("({},{})", a.label(x / nb), b.label(x % nb)))
            .collect();
        group.with_labels(labels)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn identity(&self) -> Element {
        self.identity
    }

    #[inline]
    pub fn mul(&self, a: Element, b: Element) -> Element {
        self.mul[a * self.order + b]
    }

    #[inline]
    pub fn inv(&self, g: Element) -> Element {
        self.inv[g]
    }

    /// Product of a sequence, left to right.
    pub fn product<I: IntoIterator<Item = Element>>(&self, elems: I) -> Element {
        elems
            .into_iter()
            .fold(self.identity, |acc, g| self.mul(acc, g))
    }

    pub fn elements(&self) -> std::ops::Range<Element> {
        0..self.order
    }

    pub fn is_abelian(&self) -> bool {
        (0..self.order).all(|a| (0..a).all(|b| self.mul(a, b) == self.mul(b, a)))
    }

    pub fn label(&self, g: Element) -> String {
        match &self.labels {
            Some(l) => l[g].clone(),
            None => g.to_string(),
        }
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn element_by_label(&self, label: &str) -> Result<Element, GroupError> {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().position(|s| s == label))
            .ok_or_else(|| GroupError::UnknownLabel(label.to_string()))
    }

    /// The table as nested rows, e.g. for serialization.
    pub fn table(&self) -> Vec<Vec<Element>> {
        self.mul.chunks(self.order).map(|r| r.to_vec()).collect()
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

fn cycle_label(p: &[usize]) -> String {
    let mut seen = vec![false; p.len()];
    let mut out = String::new();
    for start in 0..p.len() {
        if seen[start] || p[start] == start {
            continue;
        }
        out.push('(');
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            out.push_str(&(i + 1).to_string());
            i = p[i];
        }
        out.push(')');
    }
    if out.is_empty() {
        "e".to_string()
    } else {
        out
    }
}

/// A subgroup, stored as the sorted list of its members.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subgroup {
    members: Vec<Element>,
}

impl Subgroup {
    /// Validates that `members` is a subgroup of `group`.
    pub fn new<I>(group: &FiniteGroup, members: I) -> Result<Self, GroupError>
    where
        I: IntoIterator<Item = Element>,
    {
        let set: BTreeSet<Element> = members.into_iter().collect();
        if let Some(&g) = set.iter().find(|&&g| g >= group.order()) {
            return Err(GroupError::NotASubgroup(format!(
                "element {g} is outside a group of order {}",
                group.order()
            )));
        }
        if !set.contains(&group.identity()) {
            return Err(GroupError::NotASubgroup("missing identity".into()));
        }
        for &a in &set {
            if !set.contains(&group.inv(a)) {
                return Err(GroupError::NotASubgroup(format!("inverse of {a} missing")));
            }
            for &b in &set {
                if !set.contains(&group.mul(a, b)) {
                    return Err(GroupError::NotASubgroup(format!(
                        "{a}*{b} = {} missing",
                        group.mul(a, b)
                    )));
                }
            }
        }
        Ok(Self {
            members: set.into_iter().collect(),
        })
    }

    pub fn trivial(group: &FiniteGroup) -> Self {
        Self {
            members: vec![group.identity()],
        }
    }

    pub fn whole(group: &FiniteGroup) -> Self {
        Self {
            members: group.elements().collect(),
        }
    }

    /// The subgroup generated by `gens`.
    pub fn generated<I>(group: &FiniteGroup, gens: I) -> Self
    where
        I: IntoIterator<Item = Element>,
    {
        let gens: Vec<Element> = gens.into_iter().collect();
        let mut in_set = vec![false; group.order()];
        let mut members = vec![group.identity()];
        in_set[group.identity()] = true;
        let mut i = 0;
        while i < members.len() {
            let x = members[i];
            for &g in &gens {
                let y = group.mul(x, g);
                if !in_set[y] {
                    in_set[y] = true;
                    members.push(y);
                }
            }
            i += 1;
        }
        members.sort_unstable();
        Self { members }
    }

    pub fn members(&self) -> &[Element] {
        &self.members
    }

    pub fn order(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, g: Element) -> bool {
        self.members.binary_search(&g).is_ok()
    }

    pub fn is_subset_of(&self, other: &Subgroup) -> bool {
        self.members.iter().all(|&g| other.contains(g))
    }

    pub fn is_trivial(&self) -> bool {
        self.members.len() == 1
    }

    pub fn is_whole(&self, group: &FiniteGroup) -> bool {
        self.members.len() == group.order()
    }

    pub fn is_normal(&self, group: &FiniteGroup) -> bool {
        group
            .elements()
            .all(|g| conjugate_subgroup(group, self, g) == *self)
    }
}

/// All subgroups of `group`, sorted by order then members.
///
/// Every subgroup is a join of cyclic subgroups, so starting from the cyclic
/// subgroups and closing each found subgroup with one more cyclic generator
/// until nothing new appears reaches all of them.
pub fn enumerate_subgroups(group: &FiniteGroup, bound: usize) -> Result<Vec<Subgroup>, GroupError> {
    if group.order() > bound {
        return Err(GroupError::OrderTooLarge {
            order: group.order(),
            bound,
        });
    }
    let cyclic: BTreeSet<Subgroup> = group
        .elements()
        .map(|g| Subgroup::generated(group, [g]))
        .collect();
    let cyclic_gens: Vec<Element> = {
        // one generator per distinct cyclic subgroup
        let mut gens = Vec::new();
        let mut seen = BTreeSet::new();
        for g in group.elements() {
            if seen.insert(Subgroup::generated(group, [g])) {
                gens.push(g);
            }
        }
        gens
    };
    let mut found = cyclic.clone();
    let mut work: Vec<Subgroup> = cyclic.into_iter().collect();
    while let Some(sub) = work.pop() {
        for &g in &cyclic_gens {
            if sub.contains(g) {
                continue;
            }
            let joined = Subgroup::generated(group, sub.members().iter().copied().chain([g]));
            if found.insert(joined.clone()) {
                work.push(joined);
            }
        }
    }
    let mut out: Vec<Subgroup> = found.into_iter().collect();
    out.sort_by(|a, b| a.order().cmp(&b.order()).then_with(|| a.cmp(b)));
    Ok(out)
}

/// Left cosets `gH` of a subgroup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CosetSpace {
    subgroup: Subgroup,
    coset_of: Vec<usize>,
    cosets: Vec<Vec<Element>>,
}

/// Partitions `group` into left cosets of `subgroup`. Coset ids are assigned
/// in increasing order of their smallest element, so coset `c` always starts
/// with a smaller index than coset `c + 1`.
pub fn left_cosets(group: &FiniteGroup, subgroup: &Subgroup) -> Result<CosetSpace, GroupError> {
    let checked = Subgroup::new(group, subgroup.members().iter().copied())?;
    let n = group.order();
    let mut coset_of = vec![usize::MAX; n];
    let mut cosets = Vec::with_capacity(n / checked.order());
    for g in 0..n {
        if coset_of[g] != usize::MAX {
            continue;
        }
        let id = cosets.len();
        let mut members: Vec<Element> =
            checked.members().iter().map(|&h| group.mul(g, h)).collect();
        members.sort_unstable();
        for &x in &members {
            coset_of[x] = id;
        }
        cosets.push(members);
    }
    Ok(CosetSpace {
        subgroup: checked,
        coset_of,
        cosets,
    })
}

impl CosetSpace {
    pub fn subgroup(&self) -> &Subgroup {
        &self.subgroup
    }

    pub fn coset_of(&self, g: Element) -> usize {
        self.coset_of[g]
    }

    pub fn cosets(&self) -> &[Vec<Element>] {
        &self.cosets
    }

    pub fn len(&self) -> usize {
        self.cosets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cosets.is_empty()
    }
}

/// A choice of representative for every coset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    representative: Vec<Element>,
}

impl Section {
    /// Builds a section from explicit representatives, one per coset id.
    pub fn new(cosets: &CosetSpace, representative: Vec<Element>) -> Result<Self, GroupError> {
        if representative.len() != cosets.len() {
            return Err(GroupError::NotASubgroup(format!(
                "section has {} representatives for {} cosets",
                representative.len(),
                cosets.len()
            )));
        }
        for (c, &r) in representative.iter().enumerate() {
            if r >= cosets.coset_of.len() || cosets.coset_of(r) != c {
                return Err(GroupError::NotASubgroup(format!(
                    "representative {r} does not lie in coset {c}"
                )));
            }
        }
        Ok(Self { representative })
    }

    pub fn representative(&self, coset: usize) -> Element {
        self.representative[coset]
    }

    /// `s(gH)`.
    pub fn of(&self, cosets: &CosetSpace, g: Element) -> Element {
        self.representative[cosets.coset_of(g)]
    }
}

/// Minimal-index representative of every coset.
pub fn default_section(cosets: &CosetSpace) -> Section {
    Section {
        representative: cosets.cosets.iter().map(|c| c[0]).collect(),
    }
}

/// Maximal-index representative of every coset; a second gauge for tests
/// and comparisons.
pub fn max_section(cosets: &CosetSpace) -> Section {
    Section {
        representative: cosets.cosets.iter().map(|c| *c.last().unwrap()).collect(),
    }
}

/// `h(g) = s(gH)^{-1} g`, the `H`-component of `g`.
pub fn h_part(group: &FiniteGroup, g: Element, cosets: &CosetSpace, section: &Section) -> Element {
    group.mul(group.inv(section.of(cosets, g)), g)
}

/// `{g^{-1} h g : h in H}`.
pub fn conjugate_subgroup(group: &FiniteGroup, subgroup: &Subgroup, g: Element) -> Subgroup {
    let gi = group.inv(g);
    let mut members: Vec<Element> = subgroup
        .members()
        .iter()
        .map(|&h| group.mul(group.mul(gi, h), g))
        .collect();
    members.sort_unstable();
    Subgroup { members }
}

/// Smallest-index `g` with `g^{-1} H1 g = H2`, if any.
pub fn are_conjugate(group: &FiniteGroup, h1: &Subgroup, h2: &Subgroup) -> Option<Element> {
    if h1.order() != h2.order() {
        return None;
    }
    group
        .elements()
        .find(|&g| conjugate_subgroup(group, h1, g) == *h2)
}

/// Smallest normal subgroup containing `subgroup`.
pub fn normal_closure(group: &FiniteGroup, subgroup: &Subgroup) -> Subgroup {
    let mut gens = BTreeSet::new();
    for g in group.elements() {
        gens.extend(
            conjugate_subgroup(group, subgroup, g)
                .members()
                .iter()
                .copied(),
        );
    }
    Subgroup::generated(group, gens)
}
