//! Symbolic scenes and the object-set queries the DSL relations build on.
//!
//! Spatial relations are defined by strict comparison of symbolic
//! coordinates: `left`/`right` compare `x`, `front`/`behind` compare `y`
//! (smaller `y` is closer to the camera). Scenes guarantee pairwise distinct
//! `x` and `y` coordinates, so every relation is total.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

/// Largest number of objects a scene may hold.
pub const MAX_OBJECTS: usize = 10;
/// Smallest number of objects [`sample_scene`] will place.
pub const MIN_SAMPLED_OBJECTS: usize = 3;
/// Minimum per-axis gap between sampled object positions.
pub const SEPARATION_MARGIN: f64 = 0.01;
/// Half-width of the square the sampler places objects in.
pub const SCENE_EXTENT: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SceneError {
    #[error("invalid object bounds: need {MIN_SAMPLED_OBJECTS} <= min ({min}) <= max ({max}) <= {MAX_OBJECTS}")]
    InvalidBounds { min: usize, max: usize },
    #[error("unknown object id {id} (scene has {len} objects)")]
    UnknownObject { id: usize, len: usize },
    #[error("scene must hold between 1 and {MAX_OBJECTS} objects, got {0}")]
    ObjectCount(usize),
    #[error("object at position {position} carries id {id}")]
    IdMismatch { position: usize, id: usize },
    #[error("objects {a} and {b} share a {axis} coordinate")]
    CoordinateTie { a: usize, b: usize, axis: char },
    #[error("non-finite coordinate on object {0}")]
    NonFinite(usize),
    #[error("unknown {kind} word {word:?}")]
    UnknownWord { kind: &'static str, word: String },
}

macro_rules! vocabulary {
    ($(#[$meta:meta])* $name:ident, $kind:literal, { $($variant:ident => $word:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn word(self) -> &'static str {
                match self {
                    $($name::$variant => $word),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.word())
            }
        }

        impl FromStr for $name {
            type Err = SceneError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($word => Ok($name::$variant),)+
                    _ => Err(SceneError::UnknownWord { kind: $kind, word: s.to_string() }),
                }
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.word())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

vocabulary!(Size, "size", { Small => "small", Large => "large" });
vocabulary!(Color, "color", {
    Gray => "gray",
    Red => "red",
    Blue => "blue",
    Green => "green",
    Brown => "brown",
    Purple => "purple",
    Cyan => "cyan",
    Yellow => "yellow",
});
vocabulary!(Material, "material", { Rubber => "rubber", Metal => "metal" });
vocabulary!(Shape, "shape", { Cube => "cube", Sphere => "sphere", Cylinder => "cylinder" });
vocabulary!(
    /// One of the four object properties.
    Property, "property", {
    Size => "size",
    Color => "color",
    Material => "material",
    Shape => "shape",
});
vocabulary!(
    /// Spatial relation direction, as in `relate[left]`.
    Direction, "direction", {
    Left => "left",
    Right => "right",
    Front => "front",
    Behind => "behind",
});

impl Direction {
    /// The phrase used in question text.
    pub fn phrase(self) -> &'static str {
        match self {
            Direction::Left => "left of",
            Direction::Right => "right of",
            Direction::Front => "in front of",
            Direction::Behind => "behind",
        }
    }

    pub fn inverse(self) -> Direction {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
            Direction::Front => Direction::Behind,
            Direction::Behind => Direction::Front,
        }
    }
}

/// A concrete value of one property, e.g. `color = brown`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttributeValue {
    Size(Size),
    Color(Color),
    Material(Material),
    Shape(Shape),
}

impl AttributeValue {
    pub fn property(self) -> Property {
        match self {
            AttributeValue::Size(_) => Property::Size,
            AttributeValue::Color(_) => Property::Color,
            AttributeValue::Material(_) => Property::Material,
            AttributeValue::Shape(_) => Property::Shape,
        }
    }

    pub fn word(self) -> &'static str {
        match self {
            AttributeValue::Size(v) => v.word(),
            AttributeValue::Color(v) => v.word(),
            AttributeValue::Material(v) => v.word(),
            AttributeValue::Shape(v) => v.word(),
        }
    }

    /// All values of `property`, in vocabulary order.
    pub fn values_of(property: Property) -> Vec<AttributeValue> {
        match property {
            Property::Size => Size::ALL.iter().map(|&v| AttributeValue::Size(v)).collect(),
            Property::Color => Color::ALL.iter().map(|&v| AttributeValue::Color(v)).collect(),
            Property::Material => Material::ALL.iter().map(|&v| AttributeValue::Material(v)).collect(),
            Property::Shape => Shape::ALL.iter().map(|&v| AttributeValue::Shape(v)).collect(),
        }
    }

    /// Every attribute value of every property (15 words).
    pub fn all() -> Vec<AttributeValue> {
        Property::ALL.iter().flat_map(|&p| Self::values_of(p)).collect()
    }

    pub fn parse(property: Property, word: &str) -> Result<AttributeValue, SceneError> {
        Ok(match property {
            Property::Size => AttributeValue::Size(word.parse()?),
            Property::Color => AttributeValue::Color(word.parse()?),
            Property::Material => AttributeValue::Material(word.parse()?),
            Property::Shape => AttributeValue::Shape(word.parse()?),
        })
    }
}

impl fmt::Display for AttributeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectAttributes {
    pub size: Size,
    pub color: Color,
    pub material: Material,
    pub shape: Shape,
}

impl ObjectAttributes {
    pub fn get(&self, property: Property) -> AttributeValue {
        match property {
            Property::Size => AttributeValue::Size(self.size),
            Property::Color => AttributeValue::Color(self.color),
            Property::Material => AttributeValue::Material(self.material),
            Property::Shape => AttributeValue::Shape(self.shape),
        }
    }

    pub fn has(&self, value: AttributeValue) -> bool {
        self.get(value.property()) == value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(SceneError::UnknownWord { kind: "split", word: s.to_string() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: usize,
    pub attrs: ObjectAttributes,
    /// `[x, y, z]`: camera-plane horizontal, depth, height.
    pub position: [f64; 3],
}

/// A set of object ids within one scene, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ObjectSet(u32);

impl ObjectSet {
    pub const EMPTY: ObjectSet = ObjectSet(0);

    /// `{0, 1, ..., n-1}`.
    pub fn all(n: usize) -> ObjectSet {
        debug_assert!(n <= 32);
        if n >= 32 {
            ObjectSet(u32::MAX)
        } else {
            ObjectSet((1u32 << n) - 1)
        }
    }

    pub fn singleton(id: usize) -> ObjectSet {
        ObjectSet(1 << id)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn contains(self, id: usize) -> bool {
        id < 32 && self.0 & (1 << id) != 0
    }

    pub fn insert(&mut self, id: usize) {
        self.0 |= 1 << id;
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: ObjectSet) -> ObjectSet {
        ObjectSet(self.0 | other.0)
    }

    pub fn intersect(self, other: ObjectSet) -> ObjectSet {
        ObjectSet(self.0 & other.0)
    }

    pub fn is_subset(self, other: ObjectSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// The sole element, if the set is a singleton.
    pub fn only(self) -> Option<usize> {
        (self.len() == 1).then(|| self.0.trailing_zeros() as usize)
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |&i| self.0 & (1 << i) != 0)
    }
}

impl FromIterator<usize> for ObjectSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = ObjectSet::EMPTY;
        for id in iter {
            s.insert(id);
        }
        s
    }
}

impl fmt::Display for ObjectSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", ids.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_index: usize,
    pub split: Split,
    objects: Vec<SceneObject>,
}

impl Scene {
    /// Validates ids, object count and coordinate distinctness.
    ///
    /// Accepts 1..=[`MAX_OBJECTS`] objects so that hand-built edge-case
    /// scenes are expressible; [`sample_scene`] always yields at least
    /// [`MIN_SAMPLED_OBJECTS`].
    pub fn new(scene_index: usize, split: Split, objects: Vec<SceneObject>) -> Result<Scene, SceneError> {
        if objects.is_empty() || objects.len() > MAX_OBJECTS {
            return Err(SceneError::ObjectCount(objects.len()));
        }
        for (position, obj) in objects.iter().enumerate() {
            if obj.id != position {
                return Err(SceneError::IdMismatch { position, id: obj.id });
            }
            if obj.position.iter().any(|c| !c.is_finite()) {
                return Err(SceneError::NonFinite(position));
            }
        }
        for a in 0..objects.len() {
            for b in a + 1..objects.len() {
                let (pa, pb) = (objects[a].position, objects[b].position);
                if pa[0] == pb[0] {
                    return Err(SceneError::CoordinateTie { a, b, axis: 'x' });
                }
                if pa[1] == pb[1] {
                    return Err(SceneError::CoordinateTie { a, b, axis: 'y' });
                }
            }
        }
        Ok(Scene { scene_index, split, objects })
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn all_objects(&self) -> ObjectSet {
        ObjectSet::all(self.objects.len())
    }

    pub fn object(&self, id: usize) -> Result<&SceneObject, SceneError> {
        self.objects.get(id).ok_or(SceneError::UnknownObject { id, len: self.objects.len() })
    }

    /// Objects in `within` carrying `value`.
    pub fn filter(&self, within: ObjectSet, value: AttributeValue) -> ObjectSet {
        within.iter().filter(|&i| i < self.objects.len() && self.objects[i].attrs.has(value)).collect()
    }

    /// Objects strictly on the `direction` side of `anchor`; never includes the anchor.
    pub fn spatial_set(&self, anchor: usize, direction: Direction) -> Result<ObjectSet, SceneError> {
        let a = self.object(anchor)?.position;
        Ok(self
            .objects
            .iter()
            .filter(|o| {
                let p = o.position;
                match direction {
                    Direction::Left => p[0] < a[0],
                    Direction::Right => p[0] > a[0],
                    Direction::Front => p[1] < a[1],
                    Direction::Behind => p[1] > a[1],
                }
            })
            .map(|o| o.id)
            .collect())
    }

    /// Every other object sharing the anchor's value of `property`.
    pub fn match_set(&self, anchor: usize, property: Property) -> Result<ObjectSet, SceneError> {
        let value = self.object(anchor)?.attrs.get(property);
        Ok(self.objects.iter().filter(|o| o.id != anchor && o.attrs.get(property) == value).map(|o| o.id).collect())
    }
}

/// Sample a scene as a pure function of `(rng_seed, scene_index)`.
pub fn sample_scene(
    rng_seed: u64,
    scene_index: usize,
    min_objects: usize,
    max_objects: usize,
    split: Split,
) -> Result<Scene, SceneError> {
    if !(MIN_SAMPLED_OBJECTS <= min_objects && min_objects <= max_objects && max_objects <= MAX_OBJECTS) {
        return Err(SceneError::InvalidBounds { min: min_objects, max: max_objects });
    }
    let mut rng = rng::stream(rng_seed, scene_index as u64, 0x5CE7E);
    let count = rng.random_range(min_objects..=max_objects);
    let mut objects: Vec<SceneObject> = Vec::with_capacity(count);
    while objects.len() < count {
        let attrs = ObjectAttributes {
            size: Size::ALL[rng.random_range(0..Size::ALL.len())],
            color: Color::ALL[rng.random_range(0..Color::ALL.len())],
            material: Material::ALL[rng.random_range(0..Material::ALL.len())],
            shape: Shape::ALL[rng.random_range(0..Shape::ALL.len())],
        };
        // Resample the position until it clears every placed object on both axes.
        let (x, y) = loop {
            let x = rng.random_range(-SCENE_EXTENT..SCENE_EXTENT);
            let y = rng.random_range(-SCENE_EXTENT..SCENE_EXTENT);
            let clear = objects.iter().all(|o| {
                (o.position[0] - x).abs() > SEPARATION_MARGIN && (o.position[1] - y).abs() > SEPARATION_MARGIN
            });
            if clear {
                break (x, y);
            }
        };
        let z = match attrs.size {
            Size::Small => 0.35,
            Size::Large => 0.7,
        };
        objects.push(SceneObject { id: objects.len(), attrs, position: [x, y, z] });
    }
    Scene::new(scene_index, split, objects)
}
