//! Generators and straight-line oracles shared by the integration tests and
//! the acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nesy_rules::interchange::{
    feature_map_path, mask_paths, save_feature_map, save_mask, write_table, BinarizationTable, FeatureMap,
    InstanceMeta, NormsTable, SegmentationMask,
};
use nesy_rules::quantize::compute_norm;
use nesy_rules::ruleset::{Head, Literal, Predicate, Rule, RuleSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn meta(n: usize, classes: &[String], rng: &mut impl Rng) -> InstanceMeta {
    let true_class: Vec<String> = (0..n).map(|_| classes.choose(rng).unwrap().clone()).collect();
    InstanceMeta {
        image_ids: (0..n).map(|i| format!("img{i:04}")).collect(),
        cnn_pred: Some(true_class.clone()),
        true_class,
        cnn_conf: Some((0..n).map(|_| rng.gen_range(0.0..=1.0)).collect()),
    }
}

// ---------------------------------------------------------------- quantize

pub fn random_norms(rng: &mut impl Rng, max_rows: usize, max_kernels: usize) -> NormsTable {
    let n = rng.gen_range(1..=max_rows);
    let k = rng.gen_range(1..=max_kernels);
    let mut ids: Vec<u32> = (0..200).collect();
    ids.shuffle(rng);
    ids.truncate(k);
    let scale = 10f64.powi(rng.gen_range(-3..=3));
    let mut cells = Vec::with_capacity(n * k);
    for _ in 0..n * k {
        let v = match rng.gen_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen_range(0.0..1.0) * scale,
        };
        cells.push(v);
    }
    let classes = vec!["a".to_string(), "b".to_string()];
    NormsTable::new(meta(n, &classes, rng), ids, cells).unwrap()
}

/// Thresholds by two passes over each column: mean, then population variance.
pub fn oracle_thresholds(norms: &NormsTable, alpha: f64, gamma: f64) -> Vec<f64> {
    let n = norms.n_rows();
    let mut out = Vec::new();
    for col in 0..norms.n_kernels() {
        let mut sum = 0.0;
        for row in 0..n {
            sum += norms.get(row, col);
        }
        let mean = sum / n as f64;
        let mut sq = 0.0;
        for row in 0..n {
            let d = norms.get(row, col) - mean;
            sq += d * d;
        }
        let sd = (sq / n as f64).sqrt();
        out.push(alpha * mean + gamma * sd);
    }
    out
}

// ---------------------------------------------------------------- rule sets

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_rules: usize,
    pub max_ab_depth: u32,
    pub n_kernels: u32,
    /// Random labels, bindings, coverage and padding metadata for round-trip tests.
    pub decorate: bool,
}

pub fn random_ruleset(rng: &mut impl Rng, shape: Shape) -> RuleSet {
    loop {
        if let Some(rs) = try_ruleset(rng, shape) {
            return rs;
        }
    }
}

fn class_name(rng: &mut impl Rng, decorate: bool) -> String {
    const PLAIN: &[&str] = &["kitchen", "bedroom", "bathroom", "2", "10", "stop"];
    const ODD: &[&str] = &["living room", "it's", "back`tick", "a\\b", "Upper", "x, y"];
    if decorate && rng.gen_bool(0.3) {
        ODD.choose(rng).unwrap().to_string()
    } else {
        PLAIN.choose(rng).unwrap().to_string()
    }
}

fn try_ruleset(rng: &mut impl Rng, shape: Shape) -> Option<RuleSet> {
    let n_rules = rng.gen_range(0..=shape.max_rules);
    let n_classes = rng.gen_range(1..=4);
    let mut classes: Vec<String> = Vec::new();
    while classes.len() < n_classes {
        let c = class_name(rng, shape.decorate);
        if !classes.contains(&c) {
            classes.push(c);
        }
    }

    // Exception groups: level-1 groups use kernels only, a level-L group may
    // also use groups of lower level.
    let n_groups = rng.gen_range(0..=(n_rules / 2).min(6));
    let mut ids: Vec<u32> = (1..=(n_groups as u32 + 3)).collect();
    ids.shuffle(rng);
    let groups: Vec<(u32, u32)> = (0..n_groups)
        .map(|i| (ids[i], rng.gen_range(1..=shape.max_ab_depth.max(1))))
        .collect();
    let n_targets = n_rules - n_groups;
    let mut spare = shape.max_rules - n_rules;

    let kernels: Vec<u32> = (1..=shape.n_kernels).collect();
    let body = |rng: &mut dyn rand::RngCore, below: Option<u32>| -> Vec<Literal> {
        let mut lits = Vec::new();
        let n_k = rng.gen_range(0..=3.min(kernels.len()));
        for &k in kernels.choose_multiple(rng, n_k) {
            lits.push(Literal {
                predicate: Predicate::Kernel(k),
                negated: rng.gen_bool(0.5),
            });
        }
        let eligible: Vec<u32> = groups
            .iter()
            .filter(|(_, lvl)| below.is_none_or(|b| *lvl < b))
            .map(|(id, _)| *id)
            .collect();
        let n_ab = rng.gen_range(0..=2.min(eligible.len()));
        for &id in eligible.choose_multiple(rng, n_ab) {
            lits.push(Literal {
                predicate: Predicate::Ab(id),
                negated: rng.gen_bool(0.8),
            });
        }
        lits.shuffle(rng);
        lits
    };

    let mut rules = Vec::new();
    for _ in 0..n_targets {
        let class = classes.choose(rng).unwrap().clone();
        rules.push(Rule::target(class, body(rng, None)));
    }
    for &(id, level) in &groups {
        let extra = if spare > 0 && rng.gen_bool(0.3) {
            spare -= 1;
            1
        } else {
            0
        };
        for _ in 0..1 + extra {
            rules.push(Rule::ab(id, body(rng, Some(level))));
        }
    }
    rules.shuffle(rng);

    let mut universe: BTreeSet<u32> = rules
        .iter()
        .flat_map(|r| &r.body)
        .filter_map(|l| match l.predicate {
            Predicate::Kernel(k) => Some(k),
            _ => None,
        })
        .collect();
    let mut bindings = BTreeMap::new();
    if shape.decorate {
        if rng.gen_bool(0.5) {
            universe.insert(shape.n_kernels + rng.gen_range(1..50));
        }
        // Relabel some kernels as concepts, bound or not.
        let names = ["bed1", "door2", "cabinets2_door1", "wall1_floor3", "sink1"];
        let used: Vec<u32> = universe.iter().copied().collect();
        let mut renamed: HashMap<u32, String> = HashMap::new();
        for (&k, name) in used.iter().zip(names.iter()) {
            if rng.gen_bool(0.4) {
                renamed.insert(k, name.to_string());
                if rng.gen_bool(0.7) {
                    bindings.insert(name.to_string(), k);
                } else {
                    universe.remove(&k);
                }
            }
        }
        for rule in &mut rules {
            for lit in &mut rule.body {
                if let Predicate::Kernel(k) = lit.predicate {
                    if let Some(name) = renamed.get(&k) {
                        lit.predicate = Predicate::Concept(name.clone());
                    }
                }
            }
            if rng.gen_bool(0.3) {
                rule.coverage = Some(rng.gen_range(0..1000));
            }
        }
        classes.shuffle(rng);
    } else {
        universe.extend(kernels.iter().copied());
    }
    RuleSet::new(rules, classes, universe.into_iter().collect(), bindings).ok()
}

pub fn random_bits(rng: &mut impl Rng, n: usize) -> Vec<bool> {
    (0..n).map(|_| rng.gen_bool(0.5)).collect()
}

/// Evaluates exception predicates in rounds: a predicate is settled once every
/// predicate its rules mention is settled. Then the first true target wins.
pub fn brute_force(rs: &RuleSet, bits: &[bool]) -> Option<String> {
    let position: HashMap<u32, usize> = rs.kernel_universe().iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let mut ab: HashMap<u32, bool> = HashMap::new();
    let ab_ids: BTreeSet<u32> = rs
        .rules()
        .iter()
        .filter_map(|r| match r.head {
            Head::Ab(id) => Some(id),
            _ => None,
        })
        .collect();
    let value = |lit: &Literal, ab: &HashMap<u32, bool>| -> Option<bool> {
        let v = match &lit.predicate {
            Predicate::Kernel(k) => bits[position[k]],
            Predicate::Concept(name) => bits[position[&rs.bindings()[name]]],
            Predicate::Ab(id) => *ab.get(id)?,
        };
        Some(v != lit.negated)
    };
    while ab.len() < ab_ids.len() {
        let before = ab.len();
        for &id in &ab_ids {
            if ab.contains_key(&id) {
                continue;
            }
            let mut any = false;
            let mut settled = true;
            for rule in rs.rules().iter().filter(|r| r.head == Head::Ab(id)) {
                let vals: Option<Vec<bool>> = rule.body.iter().map(|l| value(l, &ab)).collect();
                match vals {
                    Some(v) => any |= v.iter().all(|&b| b),
                    None => settled = false,
                }
            }
            if settled {
                ab.insert(id, any);
            }
        }
        assert!(ab.len() > before, "unstratified exceptions");
    }
    rs.rules().iter().find_map(|r| match &r.head {
        Head::Target(c) if r.body.iter().all(|l| value(l, &ab).unwrap()) => Some(c.clone()),
        _ => None,
    })
}

// ---------------------------------------------------------------- planted lists

#[derive(Debug)]
pub struct PlantedRule {
    pub class: usize,
    pub body: Vec<(usize, bool)>,
    pub exception: Vec<(usize, bool)>,
}

pub struct Planted {
    pub rules: Vec<PlantedRule>,
    pub table: BinarizationTable,
    /// Target rules plus exception rules.
    pub rule_count: usize,
}

fn holds(conj: &[(usize, bool)], row: &[bool]) -> bool {
    conj.iter().all(|&(f, v)| row[f] == v)
}

impl Planted {
    /// Index of the planted rule deciding `row`.
    pub fn fired(&self, row: &[bool]) -> Option<usize> {
        self.rules
            .iter()
            .position(|r| holds(&r.body, row) && (r.exception.is_empty() || !holds(&r.exception, row)))
    }
}

/// A noise-free table labelled by a random decision list. Rows no rule
/// decides are dropped; each rule decides at least 20 rows.
pub fn planted(rng: &mut impl Rng, min_rows: usize) -> Planted {
    'retry: loop {
        let n_features = rng.gen_range(4..=16);
        let n_rules = rng.gen_range(1..=5);
        let n_classes = rng.gen_range(2..=3);
        let mut rules: Vec<PlantedRule> = Vec::new();
        for _ in 0..n_rules {
            // Neighbouring rules get different classes so the list does not collapse.
            let class = match rules.last() {
                None => rng.gen_range(0..n_classes),
                Some(prev) => (prev.class + rng.gen_range(1..n_classes)) % n_classes,
            };
            let mut features: Vec<usize> = (0..n_features).collect();
            features.shuffle(rng);
            let n_body = rng.gen_range(1..=3);
            let body = features[..n_body].iter().map(|&f| (f, rng.gen_bool(0.5))).collect();
            let exception = if rng.gen_bool(0.4) {
                let n_ex = rng.gen_range(1..=2).min(n_features - n_body);
                features[n_body..n_body + n_ex].iter().map(|&f| (f, rng.gen_bool(0.5))).collect()
            } else {
                Vec::new()
            };
            rules.push(PlantedRule { class, body, exception });
        }
        let mut p = Planted {
            rules,
            table: BinarizationTable::new(InstanceMeta::default(), vec![], vec![]).unwrap(),
            rule_count: 0,
        };

        let mut rows: Vec<Vec<bool>> = Vec::new();
        let mut labels = Vec::new();
        let mut per_rule = vec![0usize; n_rules];
        for _ in 0..200_000 {
            if rows.len() >= min_rows && per_rule.iter().all(|&c| c >= 20) {
                break;
            }
            let row = random_bits(rng, n_features);
            let Some(i) = p.fired(&row) else {
                continue;
            };
            if rows.len() >= min_rows && per_rule[i] >= 20 {
                continue;
            }
            per_rule[i] += 1;
            labels.push(format!("c{}", p.rules[i].class));
            rows.push(row);
        }
        let distinct: BTreeSet<&String> = labels.iter().collect();
        if rows.len() < min_rows || per_rule.iter().any(|&c| c < 20) || distinct.len() < 2 {
            continue 'retry;
        }
        let n = rows.len();
        let meta = InstanceMeta {
            image_ids: (0..n).map(|i| format!("r{i}")).collect(),
            true_class: labels.clone(),
            cnn_pred: Some(labels),
            cnn_conf: None,
        };
        let cells: Vec<bool> = rows.into_iter().flatten().collect();
        p.table = BinarizationTable::new(meta, (1..=n_features as u32).collect(), cells).unwrap();
        p.rule_count = p.rules.len() + p.rules.iter().filter(|r| !r.exception.is_empty()).count();
        return p;
    }
}

// ---------------------------------------------------------------- labeller

pub fn random_region_mask(rng: &mut impl Rng, side: u32) -> (Vec<bool>, SegmentationMask) {
    let cells = (side * side) as usize;
    let density = rng.gen_range(0.0..1.0);
    let members: Vec<bool> = (0..cells).map(|_| rng.gen_bool(density)).collect();
    let n_concepts = rng.gen_range(1..=6u32);
    let names: BTreeMap<u32, String> = (0..n_concepts + 2).map(|c| (c * 3 + 1, format!("concept{c}"))).collect();
    let present: Vec<u32> = names.keys().copied().take(n_concepts as usize).collect();
    let ids: Vec<u32> = (0..cells).map(|_| *present.choose(rng).unwrap()).collect();
    (members, SegmentationMask::new("img", side, side, ids, names).unwrap())
}

/// Counts region pixels per concept with a plain index loop.
pub fn oracle_iou(members: &[bool], mask: &SegmentationMask) -> BTreeMap<String, f64> {
    let mut size = 0usize;
    for &m in members {
        if m {
            size += 1;
        }
    }
    let mut out = BTreeMap::new();
    if size == 0 {
        return out;
    }
    let ids = mask.concept_ids();
    let mut present = BTreeSet::new();
    for &c in ids {
        present.insert(c);
    }
    for c in present {
        let mut hits = 0usize;
        for i in 0..ids.len() {
            if members[i] && ids[i] == c {
                hits += 1;
            }
        }
        out.insert(mask.name_of(c).to_string(), hits as f64 / size as f64);
    }
    out
}

// ---------------------------------------------------------------- synthetic scenes

pub const SCENE_CLASSES: [&str; 3] = ["bathroom", "bedroom", "kitchen"];
/// Kernel planted for each class, and the object it fires on.
pub const PLANTED: [(u32, &str); 3] = [(5, "bathtub"), (17, "bed"), (42, "cabinet")];
pub const N_KERNELS: u32 = 64;
const MAP_SIDE: u32 = 4;
const MASK_SIDE: u32 = 16;

pub struct Scene {
    pub maps: Vec<FeatureMap>,
    pub mask: SegmentationMask,
    pub class: usize,
}

/// One image of class `class`: its object occupies a 2x2 block of the feature
/// grid (an 8x8 block of the mask) and the planted kernel fires only there.
pub fn scene(rng: &mut impl Rng, image_id: &str, class: usize) -> Scene {
    let names: BTreeMap<u32, String> = [(0, "wall"), (1, "floor"), (2, "bathtub"), (3, "bed"), (4, "cabinet")]
        .into_iter()
        .map(|(i, n)| (i, n.to_string()))
        .collect();
    let (by, bx) = (rng.gen_range(0..=2usize), rng.gen_range(0..=2usize));
    let scale = (MASK_SIDE / MAP_SIDE) as usize;
    let mut ids = Vec::with_capacity((MASK_SIDE * MASK_SIDE) as usize);
    for y in 0..MASK_SIDE as usize {
        for x in 0..MASK_SIDE as usize {
            let (gy, gx) = (y / scale, x / scale);
            let id = if (by..by + 2).contains(&gy) && (bx..bx + 2).contains(&gx) {
                2 + class as u32
            } else if y >= MASK_SIDE as usize / 2 {
                1
            } else {
                0
            };
            ids.push(id);
        }
    }
    let mask = SegmentationMask::new(image_id, MASK_SIDE, MASK_SIDE, ids, names).unwrap();

    let cells = (MAP_SIDE * MAP_SIDE) as usize;
    let mut maps = Vec::new();
    for k in 1..=N_KERNELS {
        let planted_class = PLANTED.iter().position(|&(pk, _)| pk == k);
        let values: Vec<f32> = match planted_class {
            Some(c) if c == class => (0..cells)
                .map(|i| {
                    let (gy, gx) = (i / MAP_SIDE as usize, i % MAP_SIDE as usize);
                    if (by..by + 2).contains(&gy) && (bx..bx + 2).contains(&gx) {
                        rng.gen_range(2.8..3.2)
                    } else {
                        0.0
                    }
                })
                .collect(),
            Some(_) => (0..cells).map(|_| if rng.gen_bool(0.2) { rng.gen_range(0.0..0.3) } else { 0.0 }).collect(),
            None => (0..cells).map(|_| rng.gen_range(0.0..0.9)).collect(),
        };
        maps.push(FeatureMap::new(k, image_id, MAP_SIDE, MAP_SIDE, values).unwrap());
    }
    Scene { maps, mask, class }
}

/// Writes a norms table (norms computed from the feature maps) and, when
/// `with_maps`, the feature-map and mask trees under `dir`.
pub fn write_scenes(rng: &mut impl Rng, dir: &Path, split: &str, per_class: usize, with_maps: bool) -> NormsTable {
    let mut ids = Vec::new();
    let mut classes = Vec::new();
    let mut cells = Vec::new();
    for (class, name) in SCENE_CLASSES.iter().enumerate() {
        for i in 0..per_class {
            let id = format!("{split}_{name}_{i:03}");
            let s = scene(rng, &id, class);
            cells.extend(s.maps.iter().map(compute_norm));
            if with_maps {
                for map in &s.maps {
                    let path = feature_map_path(&dir.join("featmaps"), map.kernel_id(), &id);
                    fs::create_dir_all(path.parent().unwrap()).unwrap();
                    save_feature_map(map, path).unwrap();
                }
                let masks = dir.join("masks");
                fs::create_dir_all(&masks).unwrap();
                let (grid, names) = mask_paths(&masks, &id);
                save_mask(&s.mask, grid, names).unwrap();
            }
            ids.push(id);
            classes.push(SCENE_CLASSES[class].to_string());
        }
    }
    let n = ids.len();
    let meta = InstanceMeta {
        image_ids: ids,
        cnn_pred: Some(classes.clone()),
        true_class: classes,
        cnn_conf: Some((0..n).map(|_| rng.gen_range(0.5..1.0)).collect()),
    };
    let norms = NormsTable::new(meta, (1..=N_KERNELS).collect(), cells).unwrap();
    write_table(&norms, dir.join(format!("{split}_norms.csv"))).unwrap();
    norms
}
