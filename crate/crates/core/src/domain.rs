//! Value types shared by every part of the simulator: objects, positions,
//! access events and the transactions mined for association rules.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::error::{Error, Result};

/// Identifier of a cacheable virtual object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub u64);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A planar position in abstract unit distance.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Point a fraction `t` of the way from `self` to `other`.
    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }
}

/// Euclidean distance between two points.
pub fn distance(a: Point, b: Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirtualObject {
    pub id: ObjectId,
    pub size_mb: f64,
    pub position: Point,
}

/// One timestamped interaction of a user with an object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccessEvent {
    pub time: f64,
    pub user_id: UserId,
    pub object_id: ObjectId,
    pub user_position: Point,
}

/// The distinct objects one user touched in one session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub tx_id: u64,
    items: Vec<ObjectId>,
}

impl Transaction {
    /// Builds a transaction, deduplicating and sorting `items`.
    pub fn new(tx_id: u64, items: impl IntoIterator<Item = ObjectId>) -> Result<Self> {
        let mut items: Vec<ObjectId> = items.into_iter().collect();
        items.sort_unstable();
        items.dedup();
        if items.is_empty() {
            return Err(Error::Param(format!("transaction {tx_id} has no items")));
        }
        Ok(Self { tx_id, items })
    }

    /// Items in ascending id order, without duplicates.
    pub fn items(&self) -> &[ObjectId] {
        &self.items
    }

    pub fn contains(&self, id: ObjectId) -> bool {
        self.items.binary_search(&id).is_ok()
    }
}

/// The set of objects a simulation may reference.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    objects: BTreeMap<ObjectId, VirtualObject>,
}

impl Catalog {
    pub fn new(objects: impl IntoIterator<Item = VirtualObject>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for obj in objects {
            if !(obj.size_mb > 0.0 && obj.size_mb.is_finite()) {
                return Err(Error::Param(format!(
                    "object {} has non-positive size {}",
                    obj.id, obj.size_mb
                )));
            }
            if !obj.position.is_finite() {
                return Err(Error::Param(format!("object {} has a non-finite position", obj.id)));
            }
            if map.insert(obj.id, obj.clone()).is_some() {
                return Err(Error::Param(format!("duplicate object id {}", obj.id)));
            }
        }
        Ok(Self { objects: map })
    }

    pub fn get(&self, id: ObjectId) -> Result<&VirtualObject> {
        self.objects.get(&id).ok_or(Error::UnknownObject(id))
    }

    pub fn contains(&self, id: ObjectId) -> bool {
        self.objects.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Objects in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &VirtualObject> {
        self.objects.values()
    }

    pub fn total_size_mb(&self) -> f64 {
        self.objects.values().map(|o| o.size_mb).sum()
    }
}

/// Splits a time-ordered trace into per-user sessions.
///
/// Consecutive events of one user at most `gap` seconds apart share a
/// session. Transactions come out ordered by session start time; ties keep
/// trace order.
pub fn sessionize(trace: &[AccessEvent], gap: f64) -> Vec<Transaction> {
    struct Open {
        start: f64,
        first_index: usize,
        last_time: f64,
        items: Vec<ObjectId>,
    }

    let mut open: HashMap<UserId, Open> = HashMap::new();
    let mut closed: Vec<(f64, usize, Vec<ObjectId>)> = Vec::new();

    for (idx, ev) in trace.iter().enumerate() {
        match open.get_mut(&ev.user_id) {
            Some(session) if ev.time - session.last_time <= gap => {
                session.last_time = ev.time;
                session.items.push(ev.object_id);
            }
            slot => {
                let fresh = Open {
                    start: ev.time,
                    first_index: idx,
                    last_time: ev.time,
                    items: vec![ev.object_id],
                };
                if let Some(session) = slot {
                    let done = std::mem::replace(session, fresh);
                    closed.push((done.start, done.first_index, done.items));
                } else {
                    open.insert(ev.user_id, fresh);
                }
            }
        }
    }
    closed.extend(open.into_values().map(|s| (s.start, s.first_index, s.items)));
    closed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    closed
        .into_iter()
        .enumerate()
        .map(|(i, (_, _, items))| Transaction::new(i as u64, items).expect("sessions are never empty"))
        .collect()
}
