//! Role universes and groups of roles.
//!
//! A party holding a multirole channel implements every role in its group;
//! the peer implements the complement. Groups are bitsets over `0..nrole`,
//! so the universe is capped at 64 roles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A role index.
pub type Role = usize;

/// Largest supported universe (one bit per role in a `u64`).
pub const MAX_ROLES: usize = 64;

/// Default number of roles when none is configured.
pub const DEFAULT_NROLE: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoleError {
    #[error("a role universe needs at least 2 roles, got {0}")]
    TooFewRoles(usize),
    #[error("a role universe supports at most {MAX_ROLES} roles, got {0}")]
    TooManyRoles(usize),
    #[error("role {role} is outside the universe of {nrole} roles")]
    RoleOutOfRange { role: Role, nrole: usize },
    #[error("groups belong to different universes ({0} vs {1} roles)")]
    UniverseMismatch(usize, usize),
    #[error("complements of {0} and {1} are not disjoint")]
    ComplementsNotDisjoint(Group, Group),
    #[error("malformed group literal `{0}`")]
    Syntax(String),
}

/// The fixed set of roles `0..nrole` a session is typed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct RoleUniverse {
    nrole: usize,
}

impl RoleUniverse {
    pub fn new(nrole: usize) -> Result<Self, RoleError> {
        if nrole < 2 {
            Err(RoleError::TooFewRoles(nrole))
        } else if nrole > MAX_ROLES {
            Err(RoleError::TooManyRoles(nrole))
        } else {
            Ok(RoleUniverse { nrole })
        }
    }

    pub fn nrole(self) -> usize {
        self.nrole
    }

    pub fn roles(self) -> impl Iterator<Item = Role> {
        0..self.nrole
    }

    pub fn contains(self, role: Role) -> bool {
        role < self.nrole
    }

    fn mask(self) -> u64 {
        if self.nrole == MAX_ROLES {
            u64::MAX
        } else {
            (1u64 << self.nrole) - 1
        }
    }

    /// The group of every role in the universe.
    pub fn full(self) -> Group {
        Group { bits: self.mask(), universe: self }
    }

    pub fn empty(self) -> Group {
        Group { bits: 0, universe: self }
    }

    pub fn group(self, members: impl IntoIterator<Item = Role>) -> Result<Group, RoleError> {
        let mut bits = 0u64;
        for role in members {
            if !self.contains(role) {
                return Err(RoleError::RoleOutOfRange { role, nrole: self.nrole });
            }
            bits |= 1 << role;
        }
        Ok(Group { bits, universe: self })
    }

    /// Group holding exactly one role.
    pub fn singleton(self, role: Role) -> Result<Group, RoleError> {
        self.group([role])
    }

    /// Parses the textual form `{0,2}`.
    pub fn parse_group(self, text: &str) -> Result<Group, RoleError> {
        let inner = text
            .trim()
            .strip_prefix('{')
            .and_then(|t| t.strip_suffix('}'))
            .ok_or_else(|| RoleError::Syntax(text.to_string()))?;
        let mut members = Vec::new();
        for part in inner.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let role = part
                .parse::<Role>()
                .map_err(|_| RoleError::Syntax(text.to_string()))?;
            members.push(role);
        }
        self.group(members)
    }
}

impl Default for RoleUniverse {
    fn default() -> Self {
        RoleUniverse { nrole: DEFAULT_NROLE }
    }
}

impl TryFrom<usize> for RoleUniverse {
    type Error = RoleError;
    fn try_from(n: usize) -> Result<Self, RoleError> {
        RoleUniverse::new(n)
    }
}

impl From<RoleUniverse> for usize {
    fn from(u: RoleUniverse) -> usize {
        u.nrole
    }
}

/// A finite set of roles, relative to a universe.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Group {
    bits: u64,
    universe: RoleUniverse,
}

impl Group {
    pub fn universe(self) -> RoleUniverse {
        self.universe
    }

    pub fn contains(self, role: Role) -> bool {
        role < self.universe.nrole && self.bits & (1 << role) != 0
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    /// Members in ascending order.
    pub fn members(self) -> impl Iterator<Item = Role> {
        let bits = self.bits;
        (0..self.universe.nrole).filter(move |r| bits & (1 << r) != 0)
    }

    /// Roles of the universe not in this group.
    pub fn complement(self) -> Group {
        Group { bits: !self.bits & self.universe.mask(), universe: self.universe }
    }

    fn same_universe(self, other: Group) -> Result<(), RoleError> {
        if self.universe == other.universe {
            Ok(())
        } else {
            Err(RoleError::UniverseMismatch(self.universe.nrole, other.universe.nrole))
        }
    }

    pub fn union(self, other: Group) -> Result<Group, RoleError> {
        self.same_universe(other)?;
        Ok(Group { bits: self.bits | other.bits, universe: self.universe })
    }

    pub fn intersection(self, other: Group) -> Result<Group, RoleError> {
        self.same_universe(other)?;
        Ok(Group { bits: self.bits & other.bits, universe: self.universe })
    }

    pub fn is_disjoint(self, other: Group) -> Result<bool, RoleError> {
        self.same_universe(other)?;
        Ok(self.bits & other.bits == 0)
    }

    /// True when the group and its complement are both non-empty, the side
    /// condition for typing a channel over it.
    pub fn splits_universe(self) -> bool {
        !self.is_empty() && !self.complement().is_empty()
    }
}

/// Whether the complements of two groups are disjoint.
pub fn complements_disjoint(g0: Group, g1: Group) -> Result<bool, RoleError> {
    g0.complement().is_disjoint(g1.complement())
}

/// The partition of the universe induced by two groups with disjoint
/// complements: the roles outside `g0`, the roles outside `g1`, and the
/// roles shared by both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoleBlocks {
    pub outside0: Group,
    pub outside1: Group,
    pub shared: Group,
}

/// Which block of a [`RoleBlocks`] partition a role falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Block {
    Outside0,
    Outside1,
    Shared,
}

impl RoleBlocks {
    pub fn block_of(&self, role: Role) -> Result<Block, RoleError> {
        if self.outside0.contains(role) {
            Ok(Block::Outside0)
        } else if self.outside1.contains(role) {
            Ok(Block::Outside1)
        } else if self.shared.contains(role) {
            Ok(Block::Shared)
        } else {
            Err(RoleError::RoleOutOfRange { role, nrole: self.shared.universe.nrole })
        }
    }

    pub fn as_array(&self) -> [Group; 3] {
        [self.outside0, self.outside1, self.shared]
    }
}

pub fn role_block(g0: Group, g1: Group) -> Result<RoleBlocks, RoleError> {
    if !complements_disjoint(g0, g1)? {
        return Err(RoleError::ComplementsNotDisjoint(g0, g1));
    }
    Ok(RoleBlocks {
        outside0: g0.complement(),
        outside1: g1.complement(),
        shared: g0.intersection(g1)?,
    })
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, role) in self.members().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{role}")?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}/{}", self.universe.nrole)
    }
}

/// Serialized as `{"nrole": n, "members": [..]}`.
#[derive(Serialize, Deserialize)]
struct GroupRepr {
    nrole: usize,
    members: Vec<Role>,
}

impl Serialize for Group {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GroupRepr { nrole: self.universe.nrole, members: self.members().collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Group {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = GroupRepr::deserialize(d)?;
        RoleUniverse::new(repr.nrole)
            .and_then(|u| u.group(repr.members))
            .map_err(serde::de::Error::custom)
    }
}

impl FromStr for RoleUniverse {
    type Err = RoleError;
    fn from_str(s: &str) -> Result<Self, RoleError> {
        let n = s.trim().parse::<usize>().map_err(|_| RoleError::Syntax(s.to_string()))?;
        RoleUniverse::new(n)
    }
}
