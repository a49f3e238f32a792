use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::text::normalize;

/// One catalog item with normalized title and auxiliary-field tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sku {
    pub id: String,
    pub title: Vec<String>,
    pub aux: Vec<String>,
}

impl Sku {
    /// Title followed by the auxiliary text: the document a ranker sees.
    pub fn text(&self) -> Vec<String> {
        self.title.iter().chain(&self.aux).cloned().collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    skus: Vec<Sku>,
    index: HashMap<String, usize>,
}

impl Catalog {
    pub fn new(skus: Vec<Sku>) -> Result<Self> {
        let mut index = HashMap::with_capacity(skus.len());
        for (i, s) in skus.iter().enumerate() {
            if s.id.is_empty() || s.id.contains(char::is_whitespace) {
                return Err(Error::invalid(format!("bad sku id {:?}", s.id)));
            }
            if index.insert(s.id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate sku id {:?}", s.id)));
            }
        }
        Ok(Catalog { skus, index })
    }

    pub fn len(&self) -> usize {
        self.skus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skus.is_empty()
    }

    pub fn skus(&self) -> &[Sku] {
        &self.skus
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Sku> {
        self.position(id).map(|i| &self.skus[i])
    }

    /// Tab-separated `id<TAB>title<TAB>aux`, tokens joined by single spaces.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for s in &self.skus {
            let _ = writeln!(out, "{}\t{}\t{}", s.id, s.title.join(" "), s.aux.join(" "));
        }
        out
    }

    /// Reads the TSV form; title and aux are normalized on the way in.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut skus = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(id), Some(title), aux, None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::parse(i + 1, "expected id<TAB>title[<TAB>aux]"));
            };
            skus.push(Sku {
                id: id.to_string(),
                title: normalize(title).into_tokens(),
                aux: normalize(aux.unwrap_or("")).into_tokens(),
            });
        }
        Catalog::new(skus)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Catalog::from_tsv(&fs::read_to_string(path).map_err(|e| Error::file(path, e))?)
    }
}

pub const CATEGORIES: [&str; 25] = [
    "chair",
    "desk",
    "lamp",
    "sofa",
    "bookshelf",
    "table",
    "stool",
    "cabinet",
    "dresser",
    "bed",
    "mirror",
    "rug",
    "curtain",
    "pillow",
    "blanket",
    "shelf",
    "bench",
    "ottoman",
    "wardrobe",
    "nightstand",
    "clock",
    "vase",
    "fan",
    "heater",
    "speaker",
];

pub const ATTRIBUTES: [&str; 40] = [
    "red",
    "blue",
    "green",
    "black",
    "white",
    "gray",
    "brown",
    "beige",
    "pink",
    "yellow",
    "oak",
    "walnut",
    "pine",
    "bamboo",
    "metal",
    "glass",
    "leather",
    "velvet",
    "wool",
    "cotton",
    "marble",
    "small",
    "large",
    "tall",
    "round",
    "square",
    "modern",
    "rustic",
    "vintage",
    "folding",
    "portable",
    "wireless",
    "outdoor",
    "kids",
    "adjustable",
    "padded",
    "storage",
    "doors",
    "drawers",
    "wheels",
];

const BRANDS: [&str; 24] = [
    "arlow", "bexley", "corran", "dunmore", "elvet", "fenwick", "galloway", "hartwell", "ivers",
    "jarrow", "kestrel", "lindell", "marlow", "norvik", "orwell", "pemberly", "quill", "rowan",
    "sable", "thorne", "umber", "vale", "wrenley", "yarrow",
];

const FILLER: [&str; 40] = [
    "with",
    "for",
    "and",
    "the",
    "home",
    "office",
    "room",
    "living",
    "set",
    "pack",
    "quality",
    "design",
    "easy",
    "assembly",
    "durable",
    "premium",
    "classic",
    "style",
    "new",
    "finish",
    "frame",
    "piece",
    "color",
    "made",
    "ships",
    "fully",
    "assembled",
    "space",
    "saving",
    "perfect",
    "gift",
    "great",
    "value",
    "sturdy",
    "build",
    "simple",
    "clean",
    "warranty",
    "includes",
    "hardware",
];

/// Shape of a synthetic catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogSpec {
    pub n_skus: usize,
    /// Title attributes per SKU, inclusive range.
    pub title_attributes: (usize, usize),
    /// Attributes each category draws its titles from; 0 means all.
    pub palette: usize,
    /// Share of keyword-stuffed listings: few title attributes, own
    /// category repeated in the auxiliary text.
    pub stuffed_share: f64,
    pub stuffed_attributes: (usize, usize),
    /// Extra mentions of the own category in a stuffed listing, inclusive.
    pub category_repeats: (usize, usize),
    /// Mentions of other categories in the auxiliary text.
    pub foreign_categories: (usize, usize),
    /// Attributes not in the title mentioned in the auxiliary text.
    pub distractor_attributes: (usize, usize),
    pub filler: (usize, usize),
}

impl Default for CatalogSpec {
    fn default() -> Self {
        CatalogSpec {
            n_skus: 2000,
            title_attributes: (1, 3),
            palette: 12,
            stuffed_share: 0.15,
            stuffed_attributes: (0, 1),
            category_repeats: (0, 2),
            foreign_categories: (0, 2),
            distractor_attributes: (0, 1),
            filler: (8, 60),
        }
    }
}

/// Synthetic catalog: titles are `brand attributes… category`, auxiliary
/// text mixes other categories, distractor attributes and filler. Stuffed
/// listings also repeat their category there, so they outrank plain
/// listings on a bare category query under term-frequency scoring.
pub fn generate_catalog(spec: &CatalogSpec, seed: u64) -> Catalog {
    let mut rng = substream(seed, "catalog", 0);
    let range = |rng: &mut rand_chacha::ChaCha8Rng, (lo, hi): (usize, usize)| {
        rng.gen_range(lo..=hi.max(lo))
    };
    let palettes: Vec<Vec<&str>> = CATEGORIES
        .iter()
        .map(|_| {
            if spec.palette == 0 || spec.palette >= ATTRIBUTES.len() {
                ATTRIBUTES.to_vec()
            } else {
                ATTRIBUTES
                    .choose_multiple(&mut rng, spec.palette)
                    .copied()
                    .collect()
            }
        })
        .collect();
    let mut skus = Vec::with_capacity(spec.n_skus);
    for i in 0..spec.n_skus {
        let c = rng.gen_range(0..CATEGORIES.len());
        let category = CATEGORIES[c];
        let stuffed = rng.gen_bool(spec.stuffed_share);
        let n_attr = if stuffed {
            range(&mut rng, spec.stuffed_attributes)
        } else {
            range(&mut rng, spec.title_attributes)
        }
        .min(palettes[c].len());
        let attrs: Vec<&str> = palettes[c]
            .choose_multiple(&mut rng, n_attr)
            .copied()
            .collect();
        let mut title = vec![BRANDS.choose(&mut rng).expect("non-empty").to_string()];
        title.extend(attrs.iter().map(|a| a.to_string()));
        title.push(category.to_string());

        let mut aux = Vec::new();
        if stuffed {
            for _ in 0..range(&mut rng, spec.category_repeats) {
                aux.push(category.to_string());
            }
        }
        for _ in 0..range(&mut rng, spec.foreign_categories) {
            let c = *CATEGORIES.choose(&mut rng).expect("non-empty");
            if c != category {
                aux.push(c.to_string());
            }
        }
        let n_distract = range(&mut rng, spec.distractor_attributes);
        let others: Vec<&str> = ATTRIBUTES
            .iter()
            .copied()
            .filter(|a| !attrs.contains(a))
            .collect();
        aux.extend(
            others
                .choose_multiple(&mut rng, n_distract)
                .map(|a| a.to_string()),
        );
        for _ in 0..range(&mut rng, spec.filler) {
            aux.push(FILLER.choose(&mut rng).expect("non-empty").to_string());
        }
        aux.shuffle(&mut rng);
        skus.push(Sku {
            id: format!("sku{i:05}"),
            title,
            aux,
        });
    }
    Catalog::new(skus).expect("generated ids are unique")
}

/// Category and title attributes of a generated SKU title.
pub(crate) fn title_facets(sku: &Sku) -> Option<(&str, &[String])> {
    // brand, attributes…, category
    let n = sku.title.len();
    if n < 2 {
        return None;
    }
    Some((sku.title[n - 1].as_str(), &sku.title[1..n - 1]))
}
