//! Synthetic scene generation. Given a scenario spec and a set of
//! violation categories to inject, proposes object layouts and keeps
//! the first one whose ground-truth classification equals the injected
//! set exactly. The proposal stages are heuristic; the closed-loop
//! verification is what makes the output trustworthy.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{classify_with_program, UnanswerablePolicy};
use crate::answer::GroundTruth;
use crate::compile::{compile, grid_cell, SubqueryProgram};
use crate::dsl::{Comparator, RegionShape, RelationKind, Rule, ScenarioSpec, Selector};
use crate::geometry::BBox;
use crate::manifest::{DatasetManifest, ScenarioEntry, SplitCounts, SplitFiles};
use crate::rng::{mix, rng_for};
use crate::scene::{save_scene, LabelSet, ObjectInstance, Scene};

const DEFAULT_CANVAS: (f64, f64) = (1280.0, 960.0);
const PROPOSAL_ATTEMPTS: u32 = 64;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("scenario {scenario:?} declares no violation category {category:?}")]
    UnknownCategory { scenario: String, category: String },
    #[error(
        "could not realize violations {injected:?} for scenario {scenario:?} in {attempts} proposals"
    )]
    Unsatisfiable {
        scenario: String,
        injected: Vec<String>,
        attempts: u32,
    },
    #[error(transparent)]
    Compile(#[from] crate::compile::CompileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Satisfy,
    Violate,
}

/// Deterministic per (spec name, injected set, seed). The returned
/// scene's gold labels equal the injected set, and re-classifying it
/// with the ground-truth answerer reproduces them.
pub fn generate_scene(
    spec: &ScenarioSpec,
    injected: &BTreeSet<String>,
    seed: u64,
) -> Result<Scene, GenerateError> {
    let known = spec.violation_categories();
    for category in injected {
        if !known.iter().any(|c| c == category) {
            return Err(GenerateError::UnknownCategory {
                scenario: spec.name.clone(),
                category: category.clone(),
            });
        }
    }
    let program = compile(spec)?;
    let injected_key: Vec<&str> = injected.iter().map(String::as_str).collect();
    for attempt in 0..PROPOSAL_ATTEMPTS {
        let mut ctx: Vec<&str> = vec![spec.name.as_str()];
        ctx.extend(injected_key.iter().copied());
        let attempt_str = attempt.to_string();
        ctx.push(&attempt_str);
        let mut rng = rng_for(seed, &ctx);
        let Some(scene) = propose(spec, injected, seed, &mut rng) else {
            continue;
        };
        if verified(&scene, &program, injected) {
            return Ok(scene);
        }
    }
    Err(GenerateError::Unsatisfiable {
        scenario: spec.name.clone(),
        injected: injected.iter().cloned().collect(),
        attempts: PROPOSAL_ATTEMPTS,
    })
}

fn verified(scene: &Scene, program: &SubqueryProgram, injected: &BTreeSet<String>) -> bool {
    let Ok(verdict) =
        classify_with_program(scene, program, &GroundTruth, UnanswerablePolicy::Strict)
    else {
        return false;
    };
    let got: BTreeSet<&str> = if verdict.labels.is_normal() {
        BTreeSet::new()
    } else {
        verdict.labels.labels().collect()
    };
    let want: BTreeSet<&str> = injected.iter().map(String::as_str).collect();
    got == want
}

struct Builder {
    width: f64,
    height: f64,
    objects: Vec<ObjectInstance>,
    next_id: u32,
}

impl Builder {
    fn new(width: f64, height: f64) -> Self {
        Builder {
            width,
            height,
            objects: Vec::new(),
            next_id: 1,
        }
    }

    fn canvas(&self) -> BBox {
        BBox::new(0.0, 0.0, self.width, self.height).expect("canvas is a valid box")
    }

    fn matching(&self, sel: &Selector) -> Vec<usize> {
        self.objects
            .iter()
            .enumerate()
            .filter(|(_, o)| sel.matches(o))
            .map(|(i, _)| i)
            .collect()
    }

    fn matching_in(&self, sel: &Selector, rect: &BBox) -> Vec<usize> {
        self.matching(sel)
            .into_iter()
            .filter(|&i| {
                let (cx, cy) = self.objects[i].bbox.center();
                rect.contains_point(cx, cy)
            })
            .collect()
    }

    /// Places one object with its center strictly inside `rect`
    /// (1 px inset so half-open cell edges cannot flip membership)
    /// and its box inside the canvas. None when nothing fits.
    fn place(
        &mut self,
        rng: &mut ChaCha8Rng,
        category: &str,
        rect: &BBox,
        attrs: &[(String, String)],
    ) -> Option<usize> {
        let (mut w, mut h) = category_size(category);
        let jitter = 0.8 + rng.random::<f64>() * 0.4;
        w *= jitter;
        h *= jitter;
        // Shrink to fit small cells.
        let max_w = (rect.width() - 4.0).max(4.0);
        let max_h = (rect.height() - 4.0).max(4.0);
        w = w.min(max_w);
        h = h.min(max_h);
        let lo_x = (rect.x1() + 1.0).max(w / 2.0);
        let hi_x = (rect.x2() - 1.0).min(self.width - w / 2.0);
        let lo_y = (rect.y1() + 1.0).max(h / 2.0);
        let hi_y = (rect.y2() - 1.0).min(self.height - h / 2.0);
        if lo_x > hi_x || lo_y > hi_y {
            return None;
        }
        let cx = lo_x + rng.random::<f64>() * (hi_x - lo_x);
        let cy = lo_y + rng.random::<f64>() * (hi_y - lo_y);
        let bbox = BBox::around(cx, cy, w, h).ok()?;
        let id = format!("{category}_{}", self.next_id);
        self.next_id += 1;
        let mut obj = ObjectInstance::new(id, category, bbox);
        for (k, v) in attrs {
            obj = obj.with_attr(k, v);
        }
        self.objects.push(obj);
        Some(self.objects.len() - 1)
    }

    /// Object of the category whose center is nearest the canvas
    /// center: the one a relation/distance/size subquery resolves to.
    fn resolved(&self, sel: &Selector) -> Option<usize> {
        let (ccx, ccy) = self.canvas().center();
        self.matching(sel)
            .into_iter()
            .min_by(|&i, &j| {
                let di = dist2(self.objects[i].bbox.center(), (ccx, ccy));
                let dj = dist2(self.objects[j].bbox.center(), (ccx, ccy));
                di.partial_cmp(&dj)
                    .unwrap()
                    .then(self.objects[i].id.cmp(&self.objects[j].id))
            })
    }

    fn move_center(&mut self, i: usize, cx: f64, cy: f64) -> bool {
        let b = &self.objects[i].bbox;
        let (w, h) = (b.width(), b.height());
        let cx = cx.clamp(w / 2.0, self.width - w / 2.0);
        let cy = cy.clamp(h / 2.0, self.height - h / 2.0);
        match BBox::around(cx, cy, w, h) {
            Ok(nb) => {
                self.objects[i].bbox = nb;
                true
            }
            Err(_) => false,
        }
    }

    fn scale_to_area(&mut self, i: usize, target_area: f64) -> bool {
        let b = &self.objects[i].bbox;
        let (cx, cy) = b.center();
        let factor = (target_area / b.area()).sqrt();
        let w = (b.width() * factor).max(4.0);
        let h = (b.height() * factor).max(4.0);
        if w > self.width || h > self.height {
            return false;
        }
        let cx = cx.clamp(w / 2.0, self.width - w / 2.0);
        let cy = cy.clamp(h / 2.0, self.height - h / 2.0);
        match BBox::around(cx, cy, w, h) {
            Ok(nb) => {
                self.objects[i].bbox = nb;
                true
            }
            Err(_) => false,
        }
    }
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    dx * dx + dy * dy
}

/// Stable pseudo-size per category so scenes look consistent across
/// seeds and scenarios.
fn category_size(category: &str) -> (f64, f64) {
    let h = mix(0, &[category]);
    let w = 50.0 + (h % 61) as f64;
    let hh = 50.0 + ((h >> 8) % 61) as f64;
    (w, hh)
}

fn canvas_for(spec: &ScenarioSpec) -> (f64, f64) {
    let (mut w, mut h) = DEFAULT_CANVAS;
    for region in &spec.regions {
        let env = region.shape.envelope();
        w = w.max(env.x2() + 20.0);
        h = h.max(env.y2() + 20.0);
    }
    (w, h)
}

/// Counts that pass every comparator in `satisfy` and fail every
/// comparator in `fail`, searched over a small range.
fn count_candidates(
    satisfy: &[(Comparator, u32)],
    fail: &[(Comparator, u32)],
) -> Vec<u32> {
    let limit = satisfy
        .iter()
        .chain(fail)
        .map(|(_, t)| *t)
        .max()
        .unwrap_or(0)
        + 3;
    (0..=limit)
        .filter(|&k| {
            satisfy.iter().all(|(cmp, t)| cmp.apply(k as f64, *t as f64))
                && fail.iter().all(|(cmp, t)| !cmp.apply(k as f64, *t as f64))
        })
        .collect()
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, options: &[T]) -> Option<T> {
    if options.is_empty() {
        None
    } else {
        Some(options[rng.random_range(0..options.len())])
    }
}

/// One count group: every count constraint sharing selector and
/// region, solved together so contradictory placements cannot arise.
struct CountGroup<'s> {
    selector: &'s Selector,
    region: Option<&'s str>,
    members: Vec<(Comparator, u32, Status)>,
}

fn propose(
    spec: &ScenarioSpec,
    injected: &BTreeSet<String>,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Option<Scene> {
    // One designated violator per injected category; same-category
    // twins stay on best-effort satisfy.
    let mut status: BTreeMap<&str, Status> = BTreeMap::new();
    for category in injected {
        let carriers: Vec<&str> = spec
            .constraints
            .iter()
            .filter(|c| c.violation_category == *category)
            .map(|c| c.id.as_str())
            .collect();
        let chosen = pick(rng, &carriers)?;
        status.insert(chosen, Status::Violate);
    }
    let status_of = |id: &str| status.get(id).copied().unwrap_or(Status::Satisfy);

    let (width, height) = canvas_for(spec);
    let mut b = Builder::new(width, height);

    // Stage 1: counts, merged by (selector, region).
    let mut groups: Vec<CountGroup> = Vec::new();
    for c in &spec.constraints {
        if let Rule::Count {
            selector,
            cmp,
            threshold,
            region,
        } = &c.rule
        {
            let key_region = region.as_deref();
            let entry = groups.iter_mut().find(|g| {
                g.selector == selector && g.region == key_region
            });
            let member = (*cmp, *threshold, status_of(&c.id));
            match entry {
                Some(g) => g.members.push(member),
                None => groups.push(CountGroup {
                    selector,
                    region: key_region,
                    members: vec![member],
                }),
            }
        }
    }
    for group in &groups {
        realize_count_group(spec, group, &mut b, rng)?;
    }

    // Stage 2: pairings need exactly slot-bound many objects per side.
    for c in &spec.constraints {
        if let Rule::Pairing { a, b: bs, by_key, order_by } = &c.rule {
            realize_pairing(
                spec,
                a,
                bs,
                by_key,
                order_by.as_deref(),
                status_of(&c.id),
                &mut b,
                rng,
            )?;
        }
    }

    // Stage 3: attributes on exactly slot-bound many objects.
    for c in &spec.constraints {
        if let Rule::AttributeIn { selector, key, allowed } = &c.rule {
            realize_attribute(spec, selector, key, allowed, status_of(&c.id), &mut b, rng)?;
        }
    }

    // Stages 4-6 move or resize the object each subquery resolves to.
    for c in &spec.constraints {
        match &c.rule {
            Rule::Relation { a, b: bs, relation } => {
                realize_relation(a, bs, *relation, status_of(&c.id), &mut b, rng)?;
            }
            Rule::Distance { a, b: bs, cmp, threshold } => {
                realize_distance(a, bs, *cmp, *threshold, status_of(&c.id), &mut b, rng)?;
            }
            Rule::SizeRatio { a, b: bs, cmp, threshold } => {
                realize_size_ratio(a, bs, *cmp, *threshold, status_of(&c.id), &mut b, rng)?;
            }
            _ => {}
        }
    }

    let gold = if injected.is_empty() {
        LabelSet::normal()
    } else {
        LabelSet::anomalies(injected.iter().cloned()).expect("injected categories are anomalies")
    };
    let mut tag = String::new();
    for category in injected {
        tag.push('-');
        tag.push_str(category);
    }
    let image_ref = format!("{}-{seed:08}{tag}", spec.name);
    Scene::new(&spec.name, image_ref, width, height, b.objects, Some(gold)).ok()
}

fn realize_count_group(
    spec: &ScenarioSpec,
    group: &CountGroup,
    b: &mut Builder,
    rng: &mut ChaCha8Rng,
) -> Option<()> {
    let satisfy_all: Vec<(Comparator, u32)> = group
        .members
        .iter()
        .map(|(cmp, t, _)| (*cmp, *t))
        .collect();
    let satisfy_only: Vec<(Comparator, u32)> = group
        .members
        .iter()
        .filter(|(_, _, s)| *s == Status::Satisfy)
        .map(|(cmp, t, _)| (*cmp, *t))
        .collect();
    let violators: Vec<(Comparator, u32)> = group
        .members
        .iter()
        .filter(|(_, _, s)| *s == Status::Violate)
        .map(|(cmp, t, _)| (*cmp, *t))
        .collect();

    let attrs: Vec<(String, String)> = group
        .selector
        .filter
        .as_ref()
        .map(|f| vec![(f.key.clone(), f.value.clone())])
        .unwrap_or_default();

    match group.region.map(|name| spec.region(name)) {
        None => {
            let rect = b.canvas();
            let target = pick_group_count(&satisfy_all, &satisfy_only, &violators, rng)?;
            top_up(b, rng, group.selector, &rect, target, &attrs)
        }
        Some(None) => None,
        Some(Some(region)) => match &region.shape {
            RegionShape::Box(rect) => {
                let rect = *rect;
                let target = pick_group_count(&satisfy_all, &satisfy_only, &violators, rng)?;
                top_up(b, rng, group.selector, &rect, target, &attrs)
            }
            RegionShape::Grid { rows, cols, over } => {
                let normal = pick(rng, &count_candidates(&satisfy_all, &[]))?;
                let cells = *rows * *cols;
                // Distinct victim cell per violated comparator.
                let mut victims: BTreeMap<u32, u32> = BTreeMap::new();
                for (cmp, t) in &violators {
                    let candidates = count_candidates(&satisfy_only, &[(*cmp, *t)]);
                    let k = pick(rng, &candidates)?;
                    for _ in 0..16 {
                        let cell = rng.random_range(0..cells);
                        if let std::collections::btree_map::Entry::Vacant(e) =
                            victims.entry(cell)
                        {
                            e.insert(k);
                            break;
                        }
                    }
                }
                if victims.len() != violators.len() {
                    return None;
                }
                for row in 0..*rows {
                    for col in 0..*cols {
                        let cell_rect = grid_cell(over, *rows, *cols, row, col);
                        let ordinal = row * *cols + col;
                        let k = victims.get(&ordinal).copied().unwrap_or(normal);
                        top_up(b, rng, group.selector, &cell_rect, k, &attrs)?;
                    }
                }
                Some(())
            }
        },
    }
}

fn pick_group_count(
    satisfy_all: &[(Comparator, u32)],
    satisfy_only: &[(Comparator, u32)],
    violators: &[(Comparator, u32)],
    rng: &mut ChaCha8Rng,
) -> Option<u32> {
    if violators.is_empty() {
        pick(rng, &count_candidates(satisfy_all, &[]))
    } else {
        pick(rng, &count_candidates(satisfy_only, violators))
    }
}

/// Adds objects until exactly `target` selector matches have their
/// center in `rect`. Overshoot cannot be fixed by adding, so it fails
/// the proposal.
fn top_up(
    b: &mut Builder,
    rng: &mut ChaCha8Rng,
    selector: &Selector,
    rect: &BBox,
    target: u32,
    attrs: &[(String, String)],
) -> Option<()> {
    let existing = b.matching_in(selector, rect).len() as u32;
    if existing > target {
        return None;
    }
    for _ in existing..target {
        b.place(rng, &selector.category, rect, attrs)?;
    }
    Some(())
}

#[allow(clippy::too_many_arguments)]
fn realize_pairing(
    spec: &ScenarioSpec,
    a: &Selector,
    bs: &Selector,
    by_key: &str,
    order_by: Option<&str>,
    status: Status,
    b: &mut Builder,
    rng: &mut ChaCha8Rng,
) -> Option<()> {
    let bound = *spec.maxcounts.get(&a.category)? as usize;
    let canvas = b.canvas();
    for sel in [a, bs] {
        let have = b.matching(sel).len();
        if have > bound {
            return None;
        }
        for _ in have..bound {
            let attrs: Vec<(String, String)> = sel
                .filter
                .as_ref()
                .map(|f| vec![(f.key.clone(), f.value.clone())])
                .unwrap_or_default();
            b.place(rng, &sel.category, &canvas, &attrs)?;
        }
    }
    // Keys pair slot i of each side; the order key makes the slot
    // assignment independent of where objects landed.
    let assign = |b: &mut Builder, sel: &Selector| {
        let idxs = b.matching(sel);
        for (slot, &i) in idxs.iter().enumerate() {
            let obj = &mut b.objects[i];
            obj.attributes
                .insert(by_key.to_string(), format!("link_{}", slot + 1));
            if let Some(ok) = order_by {
                obj.attributes.insert(ok.to_string(), (slot + 1).to_string());
            }
        }
        idxs
    };
    assign(b, a);
    let b_idxs = assign(b, bs);
    if status == Status::Violate {
        // Counts stay equal; one key goes off-script so only the
        // slot-match subquery fails.
        let victim = *b_idxs.get(rng.random_range(0..b_idxs.len()))?;
        b.objects[victim]
            .attributes
            .insert(by_key.to_string(), "link_unmatched".into());
    }
    Some(())
}

fn realize_attribute(
    spec: &ScenarioSpec,
    selector: &Selector,
    key: &str,
    allowed: &[String],
    status: Status,
    b: &mut Builder,
    rng: &mut ChaCha8Rng,
) -> Option<()> {
    let bound = *spec.maxcounts.get(&selector.category)? as usize;
    let canvas = b.canvas();
    let have = b.matching(selector).len();
    if have > bound {
        return None;
    }
    for _ in have..bound {
        let attrs: Vec<(String, String)> = selector
            .filter
            .as_ref()
            .map(|f| vec![(f.key.clone(), f.value.clone())])
            .unwrap_or_default();
        b.place(rng, &selector.category, &canvas, &attrs)?;
    }
    let idxs = b.matching(selector);
    for &i in &idxs {
        let value = allowed[rng.random_range(0..allowed.len())].clone();
        b.objects[i].attributes.insert(key.to_string(), value);
    }
    if status == Status::Violate {
        let mut odd = format!("not_{}", allowed.first()?);
        while allowed.contains(&odd) {
            odd.push('x');
        }
        let victim = *idxs.get(rng.random_range(0..idxs.len()))?;
        b.objects[victim].attributes.insert(key.to_string(), odd);
    }
    Some(())
}

fn ensure_one(b: &mut Builder, rng: &mut ChaCha8Rng, sel: &Selector) -> Option<usize> {
    if let Some(i) = b.resolved(sel) {
        return Some(i);
    }
    let canvas = b.canvas();
    let attrs: Vec<(String, String)> = sel
        .filter
        .as_ref()
        .map(|f| vec![(f.key.clone(), f.value.clone())])
        .unwrap_or_default();
    b.place(rng, &sel.category, &canvas, &attrs)
}

fn realize_relation(
    a: &Selector,
    bs: &Selector,
    relation: RelationKind,
    status: Status,
    b: &mut Builder,
    rng: &mut ChaCha8Rng,
) -> Option<()> {
    let ib = ensure_one(b, rng, bs)?;
    let ia = ensure_one(b, rng, a)?;
    if ia == ib {
        return None;
    }
    let (bx, by) = b.objects[ib].bbox.center();
    let gap = 60.0 + rng.random::<f64>() * 120.0;
    let hold = status == Status::Satisfy;
    let jitter = rng.random::<f64>() * 40.0 - 20.0;
    match relation {
        RelationKind::LeftOf | RelationKind::RightOf => {
            let left = matches!(relation, RelationKind::LeftOf) == hold;
            let cx = if left { bx - gap } else { bx + gap };
            b.move_center(ia, cx, by + jitter);
            // Clamping may have pushed the center back across.
            let (ax, _) = b.objects[ia].bbox.center();
            if (ax < bx) != left {
                return None;
            }
        }
        RelationKind::Above | RelationKind::Below => {
            let above = matches!(relation, RelationKind::Above) == hold;
            let cy = if above { by - gap } else { by + gap };
            b.move_center(ia, bx + jitter, cy);
            let (_, ay) = b.objects[ia].bbox.center();
            if (ay < by) != above {
                return None;
            }
        }
        RelationKind::Inside => {
            let host = b.objects[ib].bbox;
            let item = &b.objects[ia].bbox;
            if hold {
                if item.width() >= host.width() || item.height() >= host.height() {
                    return None;
                }
                b.move_center(ia, bx, by);
                if !host.contains_box(&b.objects[ia].bbox) {
                    return None;
                }
            } else {
                // Straddle the host's right edge: overlapping but not
                // contained.
                b.move_center(ia, host.x2(), by);
                if host.contains_box(&b.objects[ia].bbox) {
                    return None;
                }
            }
        }
        RelationKind::Overlaps => {
            if hold {
                b.move_center(ia, bx + 10.0, by + 10.0);
                if b.objects[ia].bbox.intersection_area(&b.objects[ib].bbox) <= 0.0 {
                    return None;
                }
            } else {
                let host = b.objects[ib].bbox;
                let w = b.objects[ia].bbox.width();
                b.move_center(ia, host.x2() + w / 2.0 + gap, by);
                if b.objects[ia].bbox.intersection_area(&b.objects[ib].bbox) > 0.0 {
                    return None;
                }
            }
        }
    }
    Some(())
}

fn realize_distance(
    a: &Selector,
    bs: &Selector,
    cmp: Comparator,
    threshold: f64,
    status: Status,
    b: &mut Builder,
    rng: &mut ChaCha8Rng,
) -> Option<()> {
    let ib = ensure_one(b, rng, bs)?;
    let ia = ensure_one(b, rng, a)?;
    if ia == ib {
        return None;
    }
    let hold = status == Status::Satisfy;
    let d = pick_scalar(cmp, threshold, hold, rng)?;
    // Axis-aligned move keeps the achieved distance exact even for
    // equality comparisons.
    let (bx, by) = b.objects[ib].bbox.center();
    let (dx, dy) = match rng.random_range(0..4u32) {
        0 => (d, 0.0),
        1 => (-d, 0.0),
        2 => (0.0, d),
        _ => (0.0, -d),
    };
    b.move_center(ia, bx + dx, by + dy);
    let got = b.objects[ia].bbox.center_distance(&b.objects[ib].bbox);
    if cmp.apply(got, threshold) != hold {
        return None;
    }
    Some(())
}

fn realize_size_ratio(
    a: &Selector,
    bs: &Selector,
    cmp: Comparator,
    threshold: f64,
    status: Status,
    b: &mut Builder,
    rng: &mut ChaCha8Rng,
) -> Option<()> {
    let ib = ensure_one(b, rng, bs)?;
    let ia = ensure_one(b, rng, a)?;
    if ia == ib {
        return None;
    }
    let hold = status == Status::Satisfy;
    let ratio = pick_scalar(cmp, threshold, hold, rng)?;
    let target = ratio * b.objects[ib].bbox.area();
    if target <= 0.0 || !b.scale_to_area(ia, target) {
        return None;
    }
    let got = b.objects[ia].bbox.area() / b.objects[ib].bbox.area();
    if cmp.apply(got, threshold) != hold {
        return None;
    }
    Some(())
}

/// A scalar that satisfies (or fails) `cmp` against `threshold`.
/// Margins are proportional so it works for pixel distances and area
/// ratios alike.
fn pick_scalar(cmp: Comparator, threshold: f64, hold: bool, rng: &mut ChaCha8Rng) -> Option<f64> {
    let margin = (threshold.abs() * (0.2 + rng.random::<f64>() * 0.4)).max(10.0 * f64::EPSILON);
    let below = (threshold - margin).max(threshold * 0.1);
    let above = threshold + margin;
    let value = match (cmp, hold) {
        (Comparator::Lt, true) | (Comparator::Ge, false) => below,
        (Comparator::Lt, false) | (Comparator::Ge, true) => above,
        (Comparator::Gt, true) | (Comparator::Le, false) => above,
        (Comparator::Gt, false) | (Comparator::Le, true) => below,
        (Comparator::Eq, true) | (Comparator::Ne, false) => threshold,
        (Comparator::Eq, false) | (Comparator::Ne, true) => {
            if rng.random::<bool>() {
                above
            } else {
                below
            }
        }
    };
    (value > 0.0).then_some(value)
}

/// Table-1-shaped corpus profile: how many scenes of each kind go in
/// each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusProfile {
    pub train_normal: u32,
    pub train_single: u32,
    pub test_normal: u32,
    pub test_single: u32,
    pub test_multi: u32,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub train: Vec<Scene>,
    pub test: Vec<Scene>,
}

/// Generates both splits. Single-anomaly scenes draw a uniform random
/// category; multi-anomaly scenes draw a random pair (re-drawn if the
/// particular pair cannot be realized).
pub fn generate_corpus(
    spec: &ScenarioSpec,
    profile: &CorpusProfile,
    seed: u64,
) -> Result<Corpus, GenerateError> {
    let categories = spec.violation_categories();
    let mut rng = rng_for(seed, &[&spec.name, "corpus"]);
    let mut serial = 0u64;
    let make = |injected: BTreeSet<String>,
                serial: &mut u64|
     -> Result<Scene, GenerateError> {
        let scene_seed = mix(seed, &["scene", &serial.to_string()]);
        *serial += 1;
        generate_scene(spec, &injected, scene_seed)
    };
    let single = |rng: &mut ChaCha8Rng, serial: &mut u64| -> Result<Scene, GenerateError> {
        let category = categories[rng.random_range(0..categories.len())].clone();
        make(BTreeSet::from([category]), serial)
    };

    let mut train = Vec::new();
    for _ in 0..profile.train_normal {
        train.push(make(BTreeSet::new(), &mut serial)?);
    }
    for _ in 0..profile.train_single {
        train.push(single(&mut rng, &mut serial)?);
    }

    let mut test = Vec::new();
    for _ in 0..profile.test_normal {
        test.push(make(BTreeSet::new(), &mut serial)?);
    }
    for _ in 0..profile.test_single {
        test.push(single(&mut rng, &mut serial)?);
    }
    for _ in 0..profile.test_multi {
        if categories.len() < 2 {
            return Err(GenerateError::Unsatisfiable {
                scenario: spec.name.clone(),
                injected: vec!["<any pair>".into()],
                attempts: 0,
            });
        }
        // Some pairs may be unrealizable for a scenario; try a few.
        let mut last_err = None;
        let mut made = None;
        for _ in 0..8 {
            let i = rng.random_range(0..categories.len());
            let mut j = rng.random_range(0..categories.len() - 1);
            if j >= i {
                j += 1;
            }
            let pair = BTreeSet::from([categories[i].clone(), categories[j].clone()]);
            match make(pair, &mut serial) {
                Ok(scene) => {
                    made = Some(scene);
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        match made {
            Some(scene) => test.push(scene),
            None => return Err(last_err.expect("at least one attempt ran")),
        }
    }
    Ok(Corpus { train, test })
}

/// Writes `out_dir/<scenario>/{train,test}/<image_ref>.json` plus a
/// manifest covering this scenario.
pub fn write_corpus(
    out_dir: &Path,
    spec: &ScenarioSpec,
    corpus: &Corpus,
) -> std::io::Result<DatasetManifest> {
    let mut entry = ScenarioEntry {
        name: spec.name.clone(),
        train: SplitCounts::default(),
        test: SplitCounts::default(),
        train_files: Some(SplitFiles::default()),
        test_files: Some(SplitFiles::default()),
    };
    for (split, scenes) in [("train", &corpus.train), ("test", &corpus.test)] {
        for scene in scenes {
            let rel = format!("{}/{split}/{}.json", spec.name, scene.image_ref);
            save_scene(scene, out_dir.join(&rel))
                .map_err(|e| std::io::Error::other(e.to_string()))?;
            let labels = scene.gold_labels.as_ref().expect("generated scenes carry gold");
            let (counts, files) = if split == "train" {
                (&mut entry.train, entry.train_files.as_mut().unwrap())
            } else {
                (&mut entry.test, entry.test_files.as_mut().unwrap())
            };
            if labels.is_normal() {
                counts.normal += 1;
                files.normal.push(rel);
            } else if labels.len() == 1 {
                counts.single_anomaly += 1;
                files.single_anomaly.push(rel);
            } else {
                counts.multi_anomaly += 1;
                files.multi_anomaly.push(rel);
            }
        }
    }
    Ok(DatasetManifest {
        scenarios: vec![entry],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::classify;
    use crate::dsl::parse;

    fn pushpins() -> ScenarioSpec {
        parse(
            r#"scenario "pushpins" {
  classes: pushpin
  region tray = grid(3, 5) over [40, 30, 1240, 930]
  constraint pin_missing violation="missing_pushpin" count(pushpin) >= 1 per tray
  constraint pin_extra violation="additional_pushpin" count(pushpin) <= 1 per tray
}"#,
        )
        .unwrap()
    }

    fn mixed() -> ScenarioSpec {
        parse(
            r#"scenario "bottle" {
  classes: bottle, cap, label, liquid
  maxcount liquid = 1
  constraint bottle_count violation="bottle_count" count(bottle) == 1
  constraint cap_count violation="missing_cap" count(cap) == 1
  constraint cap_pos violation="cap_misplaced" relation(cap, bottle) is above
  constraint label_pos violation="label_misplaced" relation(label, bottle) is inside
  constraint fill violation="fill_level" size_ratio(liquid, bottle) >= 0.4
  constraint flavor violation="wrong_flavor" attribute(liquid, kind) in {cherry, orange}
}"#,
        )
        .unwrap()
    }

    #[test]
    fn empty_injection_yields_normal() {
        let spec = pushpins();
        for seed in 0..20 {
            let scene = generate_scene(&spec, &BTreeSet::new(), seed).unwrap();
            let verdict =
                classify(&scene, &spec, &GroundTruth, UnanswerablePolicy::Strict).unwrap();
            assert!(verdict.labels.is_normal(), "seed {seed}");
            assert_eq!(scene.objects.len(), 15);
        }
    }

    #[test]
    fn injected_set_is_reproduced_exactly() {
        let spec = pushpins();
        for seed in 0..50 {
            let injected = BTreeSet::from(["additional_pushpin".to_string()]);
            let scene = generate_scene(&spec, &injected, seed).unwrap();
            let verdict =
                classify(&scene, &spec, &GroundTruth, UnanswerablePolicy::Strict).unwrap();
            let got: BTreeSet<String> =
                verdict.labels.labels().map(str::to_string).collect();
            assert_eq!(got, injected, "seed {seed}");
        }
    }

    #[test]
    fn pairwise_injection_holds_for_compatible_pair() {
        let spec = pushpins();
        let injected =
            BTreeSet::from(["missing_pushpin".to_string(), "additional_pushpin".to_string()]);
        for seed in 0..30 {
            let scene = generate_scene(&spec, &injected, seed).unwrap();
            let got: BTreeSet<String> = classify(
                &scene,
                &spec,
                &GroundTruth,
                UnanswerablePolicy::Strict,
            )
            .unwrap()
            .labels
            .labels()
            .map(str::to_string)
            .collect();
            assert_eq!(got, injected, "seed {seed}");
        }
    }

    #[test]
    fn mixed_rule_kinds_generate_cleanly() {
        let spec = mixed();
        for seed in 0..20 {
            let scene = generate_scene(&spec, &BTreeSet::new(), seed).unwrap();
            let verdict =
                classify(&scene, &spec, &GroundTruth, UnanswerablePolicy::Strict).unwrap();
            assert!(verdict.labels.is_normal(), "seed {seed}: {:?}", verdict.labels);
        }
        for category in spec.violation_categories() {
            let injected = BTreeSet::from([category.clone()]);
            let scene = generate_scene(&spec, &injected, 7).unwrap();
            let got: BTreeSet<String> = classify(
                &scene,
                &spec,
                &GroundTruth,
                UnanswerablePolicy::Strict,
            )
            .unwrap()
            .labels
            .labels()
            .map(str::to_string)
            .collect();
            assert_eq!(got, injected, "category {category}");
        }
    }

    #[test]
    fn determinism_per_seed() {
        let spec = mixed();
        let injected = BTreeSet::from(["fill_level".to_string()]);
        let a = generate_scene(&spec, &injected, 99).unwrap();
        let b = generate_scene(&spec, &injected, 99).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = generate_scene(&spec, &injected, 100).unwrap();
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap()
        );
    }

    #[test]
    fn unknown_category_is_rejected() {
        let spec = pushpins();
        let err =
            generate_scene(&spec, &BTreeSet::from(["no_such".to_string()]), 0).unwrap_err();
        assert!(matches!(err, GenerateError::UnknownCategory { .. }));
    }

    #[test]
    fn corpus_counts_and_manifest_agree() {
        let spec = pushpins();
        let profile = CorpusProfile {
            train_normal: 4,
            train_single: 2,
            test_normal: 3,
            test_single: 2,
            test_multi: 1,
        };
        let corpus = generate_corpus(&spec, &profile, 5).unwrap();
        assert_eq!(corpus.train.len(), 6);
        assert_eq!(corpus.test.len(), 6);
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_corpus(dir.path(), &spec, &corpus).unwrap();
        let entry = &manifest.scenarios[0];
        assert_eq!(entry.train.normal, 4);
        assert_eq!(entry.train.single_anomaly, 2);
        assert_eq!(entry.train.multi_anomaly, 0);
        assert_eq!(entry.test.multi_anomaly, 1);
        let report = crate::manifest::validate_manifest(&manifest);
        assert!(report.is_valid(), "{report}");
        // Every listed file loads back as a valid scene.
        for rel in &entry.test_files.as_ref().unwrap().single_anomaly {
            let scene = crate::scene::load_scene(&dir.path().join(rel)).unwrap();
            assert_eq!(scene.gold_labels.as_ref().unwrap().len(), 1);
        }
    }
}
