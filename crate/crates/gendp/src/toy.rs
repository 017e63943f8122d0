//! Synthetic restaurant-domain data: a knowledge base plus scripted
//! dialogues for exercising the full pipeline without external corpora.
//!
//! Every restaurant gets a distinct (food, pricerange, area) triple, so a
//! fully-constrained query always matches exactly one record, and the
//! combination (first food, first pricerange) is deliberately left out of
//! the KB so the no-results script really gets zero matches. Dialogues
//! follow five fixed scripts with different multi-act densities; a quota
//! solver mixes them to hit a requested multi-act turn fraction. All
//! randomness flows from seeded streams, so generation is reproducible
//! byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::codec::Lexicons;
use crate::corpus::{parse_corpus, BeliefState, CorpusError, Split};
use crate::kb::{query, Kb, KbRecord, Ontology};
use crate::nlg::{NlgError, TemplateBank};
use crate::numerics::rng::{stream, tags};

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("toy domain spec: {0}")]
    InvalidSpec(String),
    #[error("toy data io: {0}")]
    Io(#[from] std::io::Error),
    #[error("toy data serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("generated corpus failed to parse back: {0}")]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Nlg(#[from] NlgError),
}

/// Domain shape and corpus sizes for the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyDomainSpec {
    pub n_restaurants: usize,
    pub foods: Vec<String>,
    pub priceranges: Vec<String>,
    pub areas: Vec<String>,
    pub train_dialogues: usize,
    pub dev_dialogues: usize,
    pub test_dialogues: usize,
    /// Desired fraction of system turns whose action has two or more
    /// items; the schedule must land within ±0.02 of it.
    pub multi_act_fraction: f64,
}

impl Default for ToyDomainSpec {
    fn default() -> Self {
        let words = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect();
        Self {
            n_restaurants: 40,
            foods: words(&["french", "chinese", "indian", "thai", "italian"]),
            priceranges: words(&["cheap", "moderate", "expensive"]),
            areas: words(&["north", "south", "east", "west", "centre"]),
            train_dialogues: 1000,
            dev_dialogues: 200,
            test_dialogues: 200,
            multi_act_fraction: 0.55,
        }
    }
}

const NAME_ADJ: [&str; 10] = [
    "golden", "silver", "jade", "royal", "cosy", "grand", "little", "blue", "red", "olive",
];
const NAME_NOUN: [&str; 10] = [
    "house", "garden", "palace", "kitchen", "table", "spoon", "lantern", "orchid", "anchor",
    "harbour",
];
const STREETS: [&str; 10] = [
    "king", "queen", "mill", "bridge", "station", "market", "rose", "elm", "oak", "lake",
];
const STREET_KINDS: [&str; 4] = ["street", "road", "lane", "avenue"];

impl ToyDomainSpec {
    pub fn validate(&self) -> Result<(), ToyError> {
        let fail = |msg: String| Err(ToyError::InvalidSpec(msg));
        if self.n_restaurants == 0 {
            return fail("needs at least one restaurant".into());
        }
        if self.train_dialogues == 0 || self.dev_dialogues == 0 || self.test_dialogues == 0 {
            return fail("every split needs at least one dialogue".into());
        }
        if !self.multi_act_fraction.is_finite()
            || !(0.0..=1.0).contains(&self.multi_act_fraction)
        {
            return fail(format!(
                "multi-act fraction {} is not in [0, 1]",
                self.multi_act_fraction
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (slot, values) in self.inventories() {
            if values.is_empty() {
                return fail(format!("slot `{slot}` has no values"));
            }
            for v in values {
                if v.is_empty() || v.chars().any(char::is_whitespace) {
                    return fail(format!("slot value `{v}` must be a single token"));
                }
                if !seen.insert(v.clone()) {
                    return fail(format!("slot value `{v}` appears twice"));
                }
            }
            // The scripted "too many matches" turn needs some value of
            // every slot to match more than three restaurants; the
            // pigeonhole bound makes that unconditional.
            if (self.n_restaurants + values.len() - 1) / values.len() < 4 {
                return fail(format!(
                    "{} restaurants spread over {} `{slot}` values cannot give any value \
                     more than three matches",
                    self.n_restaurants,
                    values.len()
                ));
            }
        }
        let capacity =
            self.foods.len() * self.priceranges.len() * self.areas.len() - self.areas.len();
        if capacity < self.n_restaurants {
            return fail(format!(
                "only {capacity} distinct slot combinations are available (one food/pricerange \
                 pair is reserved for empty results), cannot seat {} restaurants",
                self.n_restaurants
            ));
        }
        if NAME_ADJ.len() * NAME_NOUN.len() < self.n_restaurants {
            return fail(format!(
                "name pool holds {} restaurants at most",
                NAME_ADJ.len() * NAME_NOUN.len()
            ));
        }
        for (split, n) in [
            ("train", self.train_dialogues),
            ("dev", self.dev_dialogues),
            ("test", self.test_dialogues),
        ] {
            schedule(n, self.multi_act_fraction)
                .map_err(|e| ToyError::InvalidSpec(format!("{split} split: {e}")))?;
        }
        Ok(())
    }

    fn inventories(&self) -> [(&'static str, &Vec<String>); 3] {
        [
            ("food", &self.foods),
            ("pricerange", &self.priceranges),
            ("area", &self.areas),
        ]
    }
}

/// One system turn in the JSONL corpus shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenTurn {
    pub user: String,
    pub belief: Vec<String>,
    pub action: Vec<Vec<String>>,
    pub response: String,
    pub kb_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenDialogue {
    pub turns: Vec<GenTurn>,
}

/// The five dialogue scripts. Turn counts and multi-act turn counts per
/// script: constrain-then-address 2/2, request-then-phone 3/2,
/// constrain-then-bye 2/1, browse-then-bye 3/1, no-results 2/0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pattern {
    ConstrainThenAddress,
    RequestThenPhone,
    ConstrainThenBye,
    BrowseThenBye,
    NoResults,
}

/// Picks script counts for `n` dialogues so the multi-act turn fraction
/// lands within ±0.02 of the request. The three middle scripts get a
/// tenth of the dialogues each; the remainder is split between the
/// all-multi-act and no-multi-act scripts, where the total turn count is
/// independent of the split — so one closed-form rounding step suffices.
fn schedule(n: usize, fraction: f64) -> Result<Vec<Pattern>, ToyError> {
    let q = n / 10;
    let r = n - 3 * q;
    let turns = 2 * r + 8 * q;
    let fixed_multi = 4 * q;
    let a = ((fraction * turns as f64 - fixed_multi as f64) / 2.0)
        .round()
        .clamp(0.0, r as f64) as usize;
    let achieved = (2 * a + fixed_multi) as f64 / turns as f64;
    if (achieved - fraction).abs() > 0.02 {
        return Err(ToyError::InvalidSpec(format!(
            "multi-act fraction {fraction} is unreachable with {n} dialogues; closest \
             achievable is {achieved:.3}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    out.extend(std::iter::repeat(Pattern::ConstrainThenAddress).take(a));
    out.extend(std::iter::repeat(Pattern::RequestThenPhone).take(q));
    out.extend(std::iter::repeat(Pattern::ConstrainThenBye).take(q));
    out.extend(std::iter::repeat(Pattern::BrowseThenBye).take(q));
    out.extend(std::iter::repeat(Pattern::NoResults).take(r - a));
    Ok(out)
}

// User-side surface variants. `{f}`/`{p}`/`{a}`/`{v}` are spliced in
// before writing; value mention order within a template is fixed per
// table so gold beliefs always list values in utterance order.
const PAIR_PRICE_FOOD: [&str; 3] = [
    "i want a {p} {f} restaurant",
    "im looking for a {p} {f} restaurant",
    "can you find me a {p} {f} place to eat",
];
const PAIR_FOOD_AREA: [&str; 3] = [
    "i want {f} food in the {a}",
    "are there any {f} restaurants in the {a}",
    "im looking for {f} food somewhere in the {a}",
];
const PAIR_PRICE_AREA: [&str; 2] = [
    "i want a {p} restaurant in the {a}",
    "im after something {p} in the {a} of town",
];
const TRIPLE_PRICE_FOOD_AREA: [&str; 3] = [
    "i want a {p} {f} restaurant in the {a}",
    "find me a {p} {f} place in the {a}",
    "im looking for a {p} {f} restaurant in the {a}",
];
const TRIPLE_FOOD_FIRST: [&str; 2] = [
    "{f} food please something {p} in the {a}",
    "id like {f} food {p} priced in the {a}",
];
const SINGLE_FOOD: [&str; 2] = ["im looking for a {v} restaurant", "i want {v} food"];
const SINGLE_PRICE: [&str; 2] = ["i want something {v}", "im looking for a {v} place"];
const SINGLE_AREA: [&str; 2] = [
    "im looking for a restaurant in the {v}",
    "i want to eat in the {v}",
];
const COMPLETE_AFTER_FOOD: [&str; 2] = [
    "something {p} please in the {a}",
    "{p} and in the {a} please",
];
const COMPLETE_AFTER_PRICE: [&str; 2] = [
    "{f} food please in the {a}",
    "how about {f} in the {a}",
];
const COMPLETE_AFTER_AREA: [&str; 2] = [
    "lets do {f} food at a {p} price",
    "{f} please something {p}",
];
const BROAD_OPENERS: [&str; 3] = [
    "i need a restaurant",
    "can you help me find a place to eat",
    "hi im looking for a restaurant",
];
const ASK_ADDRESS: [&str; 3] = [
    "can i get the address",
    "what is the address",
    "whats the address please",
];
const ASK_PHONE: [&str; 3] = [
    "can i get the phone number",
    "what is their phone number",
    "whats the phone number please",
];
const BYE_USER: [&str; 3] = ["thank you good bye", "thanks bye", "thank you that is all"];

// System-side surfaces, one per action key.
const REQUEST_FOOD: &str = "what kind of food would you like ?";
const REQUEST_PRICE: &str = "what price range do you have in mind ?";
const REQUEST_AREA: &str = "which part of town would you like ?";
const OFFER_FOOD_PRICE: &str =
    "name_slot serves food_slot food in the pricerange_slot price range";
const OFFER_FOOD_AREA: &str = "name_slot serves food_slot food in the area_slot of town";
const OFFER_PRICE_AREA: &str = "name_slot is a pricerange_slot restaurant in the area_slot of town";
const OFFER_ADDR: &str = "sure , name_slot is on addr_slot";
const OFFER_PHONE: &str = "the phone number of name_slot is phone_slot";
const CANTHELP: &str = "sorry , i could not find anything matching your request";
const BYE: &str = "good bye";

fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut s = template.to_string();
    for (marker, value) in pairs {
        s = s.replace(marker, value);
    }
    s
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

fn item(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

fn offer_item() -> Vec<String> {
    item(&["offer", "name", "name_slot"])
}

fn inform_item(slot: &str) -> Vec<String> {
    vec!["inform".to_string(), slot.to_string(), format!("{slot}_slot")]
}

fn request_item(slot: &str) -> Vec<String> {
    item(&["request", slot])
}

fn request_surface(slot: &str) -> &'static str {
    match slot {
        "food" => REQUEST_FOOD,
        "pricerange" => REQUEST_PRICE,
        _ => REQUEST_AREA,
    }
}

/// Offer plus informs for two constrained slots (canonical slot order),
/// with the matching response surface.
fn offer_with_informs(slots: [&str; 2]) -> (Vec<Vec<String>>, &'static str) {
    let surface = match slots {
        ["food", "pricerange"] => OFFER_FOOD_PRICE,
        ["food", "area"] => OFFER_FOOD_AREA,
        ["pricerange", "area"] => OFFER_PRICE_AREA,
        other => unreachable!("no surface for inform pair {other:?}"),
    };
    let action = vec![offer_item(), inform_item(slots[0]), inform_item(slots[1])];
    (action, surface)
}

struct Domain<'a> {
    spec: &'a ToyDomainSpec,
    kb: Kb,
    ontology: Ontology,
    /// Per slot, the values matching more than three restaurants.
    popular: BTreeMap<&'static str, Vec<String>>,
}

impl Domain<'_> {
    fn count(&self, values: &[String]) -> usize {
        query(&self.kb, &BeliefState::new(values.to_vec()), &self.ontology).count
    }

    fn pick_record(&self, rng: &mut ChaCha8Rng) -> &KbRecord {
        &self.kb.records()[rng.random_range(0..self.kb.len())]
    }
}

fn build_domain(spec: &ToyDomainSpec, rng: &mut ChaCha8Rng) -> (Kb, Ontology) {
    let mut combos = Vec::new();
    for f in &spec.foods {
        for p in &spec.priceranges {
            for a in &spec.areas {
                if !(f == &spec.foods[0] && p == &spec.priceranges[0]) {
                    combos.push((f.clone(), p.clone(), a.clone()));
                }
            }
        }
    }
    combos.shuffle(rng);
    let mut names: Vec<String> = NAME_ADJ
        .iter()
        .flat_map(|adj| NAME_NOUN.iter().map(move |noun| format!("the {adj} {noun}")))
        .collect();
    names.shuffle(rng);

    let mut records = Vec::with_capacity(spec.n_restaurants);
    for i in 0..spec.n_restaurants {
        let (f, p, a) = combos[i].clone();
        let mut r = KbRecord::new();
        r.insert("name".into(), names[i].clone());
        r.insert("food".into(), f);
        r.insert("pricerange".into(), p);
        r.insert("area".into(), a);
        r.insert(
            "addr".into(),
            format!(
                "{} {} {}",
                rng.random_range(1..100),
                pick(rng, &STREETS),
                pick(rng, &STREET_KINDS)
            ),
        );
        r.insert("phone".into(), format!("01223 {:06}", rng.random_range(0..1_000_000)));
        records.push(r);
    }
    let kb = Kb::new(records).expect("generated names are unique");

    let mut ontology = Ontology::new();
    for (slot, values) in spec.inventories() {
        for v in values {
            ontology.insert(v.clone(), slot.to_string());
        }
    }
    (kb, ontology)
}

fn popular_values(spec: &ToyDomainSpec, kb: &Kb) -> BTreeMap<&'static str, Vec<String>> {
    let mut out = BTreeMap::new();
    for (slot, values) in spec.inventories() {
        let picked: Vec<String> = values
            .iter()
            .filter(|v| kb.records().iter().filter(|r| &r[slot] == *v).count() > 3)
            .cloned()
            .collect();
        out.insert(slot, picked);
    }
    out
}

fn bye_turn(rng: &mut ChaCha8Rng, belief: Vec<String>, kb_count: usize) -> GenTurn {
    GenTurn {
        user: pick(rng, &BYE_USER).to_string(),
        belief,
        action: vec![item(&["bye"])],
        response: BYE.to_string(),
        kb_count,
    }
}

/// Constrain on two slots (widened to all three when the pair still
/// matches more than three restaurants), then ask for the address.
fn constrain_then_address(rng: &mut ChaCha8Rng, dom: &Domain) -> GenDialogue {
    let rec = dom.pick_record(rng);
    let (f, p, a) = (&rec["food"], &rec["pricerange"], &rec["area"]);
    let (mut values, mut informs, pool): (Vec<String>, [&str; 2], &[&str]) =
        match rng.random_range(0..3u32) {
            0 => (vec![p.clone(), f.clone()], ["food", "pricerange"], &PAIR_PRICE_FOOD),
            1 => (vec![f.clone(), a.clone()], ["food", "area"], &PAIR_FOOD_AREA),
            _ => (vec![p.clone(), a.clone()], ["pricerange", "area"], &PAIR_PRICE_AREA),
        };
    let subst = [("{f}", f.as_str()), ("{p}", p.as_str()), ("{a}", a.as_str())];
    let mut user = fill(pick(rng, pool), &subst);
    let mut count = dom.count(&values);
    if count > 3 {
        values = vec![p.clone(), f.clone(), a.clone()];
        informs = ["food", "pricerange"];
        user = fill(pick(rng, &TRIPLE_PRICE_FOOD_AREA), &subst);
        count = dom.count(&values);
    }
    let (action, surface) = offer_with_informs(informs);
    let t1 = GenTurn {
        user,
        belief: values.clone(),
        action,
        response: surface.to_string(),
        kb_count: count,
    };
    let t2 = GenTurn {
        user: pick(rng, &ASK_ADDRESS).to_string(),
        belief: values,
        action: vec![offer_item(), inform_item("addr")],
        response: OFFER_ADDR.to_string(),
        kb_count: count,
    };
    GenDialogue { turns: vec![t1, t2] }
}

/// Open with one popular constraint (too many matches, so the system
/// requests another slot), complete the triple, then ask for the phone.
fn request_then_phone(rng: &mut ChaCha8Rng, dom: &Domain) -> GenDialogue {
    let slot = *pick(rng, &["food", "pricerange", "area"]);
    let v = pick(rng, &dom.popular[slot]).clone();
    let requested = if slot == "food" { "pricerange" } else { "food" };
    let opener_pool: &[&str] = match slot {
        "food" => &SINGLE_FOOD,
        "pricerange" => &SINGLE_PRICE,
        _ => &SINGLE_AREA,
    };
    let t1 = GenTurn {
        user: fill(pick(rng, opener_pool), &[("{v}", v.as_str())]),
        belief: vec![v.clone()],
        action: vec![request_item(requested)],
        response: request_surface(requested).to_string(),
        kb_count: dom.count(std::slice::from_ref(&v)),
    };

    let matching: Vec<&KbRecord> =
        dom.kb.records().iter().filter(|r| r[slot] == v).collect();
    let rec = matching[rng.random_range(0..matching.len())];
    let (f, p, a) = (&rec["food"], &rec["pricerange"], &rec["area"]);
    let subst = [("{f}", f.as_str()), ("{p}", p.as_str()), ("{a}", a.as_str())];
    let (pool, added): (&[&str], Vec<String>) = match slot {
        "food" => (&COMPLETE_AFTER_FOOD, vec![p.clone(), a.clone()]),
        "pricerange" => (&COMPLETE_AFTER_PRICE, vec![f.clone(), a.clone()]),
        _ => (&COMPLETE_AFTER_AREA, vec![f.clone(), p.clone()]),
    };
    let mut belief = vec![v];
    belief.extend(added);
    let count = dom.count(&belief);
    let (action, surface) = offer_with_informs(["food", "pricerange"]);
    let t2 = GenTurn {
        user: fill(pick(rng, pool), &subst),
        belief: belief.clone(),
        action,
        response: surface.to_string(),
        kb_count: count,
    };
    let t3 = GenTurn {
        user: pick(rng, &ASK_PHONE).to_string(),
        belief,
        action: vec![offer_item(), inform_item("phone")],
        response: OFFER_PHONE.to_string(),
        kb_count: count,
    };
    GenDialogue { turns: vec![t1, t2, t3] }
}

/// Constrain on all three slots at once, accept the offer, hang up.
fn constrain_then_bye(rng: &mut ChaCha8Rng, dom: &Domain) -> GenDialogue {
    let rec = dom.pick_record(rng);
    let (f, p, a) = (&rec["food"], &rec["pricerange"], &rec["area"]);
    let values = vec![p.clone(), f.clone(), a.clone()];
    let user = fill(
        pick(rng, &TRIPLE_PRICE_FOOD_AREA),
        &[("{f}", f.as_str()), ("{p}", p.as_str()), ("{a}", a.as_str())],
    );
    let count = dom.count(&values);
    let (action, surface) = offer_with_informs(["food", "pricerange"]);
    let t1 = GenTurn {
        user,
        belief: values.clone(),
        action,
        response: surface.to_string(),
        kb_count: count,
    };
    GenDialogue { turns: vec![t1, bye_turn(rng, values, count)] }
}

/// Open with no constraint at all (the system asks for food), then give
/// the full triple, then hang up.
fn browse_then_bye(rng: &mut ChaCha8Rng, dom: &Domain) -> GenDialogue {
    let t1 = GenTurn {
        user: pick(rng, &BROAD_OPENERS).to_string(),
        belief: Vec::new(),
        action: vec![request_item("food")],
        response: REQUEST_FOOD.to_string(),
        kb_count: dom.count(&[]),
    };
    let rec = dom.pick_record(rng);
    let (f, p, a) = (&rec["food"], &rec["pricerange"], &rec["area"]);
    let values = vec![f.clone(), p.clone(), a.clone()];
    let user = fill(
        pick(rng, &TRIPLE_FOOD_FIRST),
        &[("{f}", f.as_str()), ("{p}", p.as_str()), ("{a}", a.as_str())],
    );
    let count = dom.count(&values);
    let (action, surface) = offer_with_informs(["food", "pricerange"]);
    let t2 = GenTurn {
        user,
        belief: values.clone(),
        action,
        response: surface.to_string(),
        kb_count: count,
    };
    GenDialogue { turns: vec![t1, t2, bye_turn(rng, values, count)] }
}

/// Ask for the reserved food/pricerange pair that no restaurant has.
fn no_results(rng: &mut ChaCha8Rng, dom: &Domain) -> GenDialogue {
    let f = &dom.spec.foods[0];
    let p = &dom.spec.priceranges[0];
    let values = vec![p.clone(), f.clone()];
    let user = fill(
        pick(rng, &PAIR_PRICE_FOOD),
        &[("{f}", f.as_str()), ("{p}", p.as_str())],
    );
    let count = dom.count(&values);
    let t1 = GenTurn {
        user,
        belief: values.clone(),
        action: vec![item(&["canthelp"])],
        response: CANTHELP.to_string(),
        kb_count: count,
    };
    GenDialogue { turns: vec![t1, bye_turn(rng, values, count)] }
}

fn gen_dialogue(pattern: Pattern, rng: &mut ChaCha8Rng, dom: &Domain) -> GenDialogue {
    match pattern {
        Pattern::ConstrainThenAddress => constrain_then_address(rng, dom),
        Pattern::RequestThenPhone => request_then_phone(rng, dom),
        Pattern::ConstrainThenBye => constrain_then_bye(rng, dom),
        Pattern::BrowseThenBye => browse_then_bye(rng, dom),
        Pattern::NoResults => no_results(rng, dom),
    }
}

fn split_tag(split: Split) -> u64 {
    match split {
        Split::Train => 1,
        Split::Dev => 2,
        Split::Test => 3,
    }
}

/// Everything one generation run produces, still in memory.
#[derive(Debug, Clone)]
pub struct ToyData {
    pub kb: Kb,
    pub ontology: Ontology,
    pub train: Vec<GenDialogue>,
    pub dev: Vec<GenDialogue>,
    pub test: Vec<GenDialogue>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitSummary {
    pub split: String,
    pub dialogues: usize,
    pub turns: usize,
    pub multi_act_turns: usize,
    pub multi_act_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GenSummary {
    pub kb_records: usize,
    pub splits: Vec<SplitSummary>,
}

pub fn multi_act_fraction(dialogues: &[GenDialogue]) -> f64 {
    let turns: usize = dialogues.iter().map(|d| d.turns.len()).sum();
    let multi: usize = dialogues
        .iter()
        .flat_map(|d| &d.turns)
        .filter(|t| t.action.len() >= 2)
        .count();
    multi as f64 / turns as f64
}

pub fn generate(spec: &ToyDomainSpec, seed: u64) -> Result<ToyData, ToyError> {
    spec.validate()?;
    let mut kb_rng = stream(seed, &[tags::DATA, 0, 0]);
    let (kb, ontology) = build_domain(spec, &mut kb_rng);
    let popular = popular_values(spec, &kb);
    let dom = Domain { spec, kb, ontology, popular };

    let gen_split = |split: Split, n: usize| -> Result<Vec<GenDialogue>, ToyError> {
        let tag = split_tag(split);
        let mut patterns = schedule(n, spec.multi_act_fraction)?;
        patterns.shuffle(&mut stream(seed, &[tags::DATA, tag, 0]));
        Ok(patterns
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let mut rng = stream(seed, &[tags::DATA, tag, i as u64 + 1]);
                gen_dialogue(p, &mut rng, &dom)
            })
            .collect())
    };

    let train = gen_split(Split::Train, spec.train_dialogues)?;
    let dev = gen_split(Split::Dev, spec.dev_dialogues)?;
    let test = gen_split(Split::Test, spec.test_dialogues)?;
    Ok(ToyData { kb: dom.kb, ontology: dom.ontology, train, dev, test })
}

fn jsonl(dialogues: &[GenDialogue]) -> Result<String, ToyError> {
    let mut out = String::new();
    for d in dialogues {
        out.push_str(&serde_json::to_string(d)?);
        out.push('\n');
    }
    Ok(out)
}

impl ToyData {
    pub fn summary(&self) -> GenSummary {
        let splits = [
            ("train", &self.train),
            ("dev", &self.dev),
            ("test", &self.test),
        ]
        .into_iter()
        .map(|(name, dialogues)| {
            let turns: usize = dialogues.iter().map(|d| d.turns.len()).sum();
            let multi = dialogues
                .iter()
                .flat_map(|d| &d.turns)
                .filter(|t| t.action.len() >= 2)
                .count();
            SplitSummary {
                split: name.to_string(),
                dialogues: dialogues.len(),
                turns,
                multi_act_turns: multi,
                multi_act_fraction: multi as f64 / turns as f64,
            }
        })
        .collect();
        GenSummary { kb_records: self.kb.len(), splits }
    }

    /// Writes the six data files: three JSONL splits, the KB, the
    /// ontology, and a template bank extracted from the training split.
    pub fn write(&self, dir: &Path) -> Result<GenSummary, ToyError> {
        fs::create_dir_all(dir)?;
        let train_text = jsonl(&self.train)?;
        fs::write(dir.join("train.jsonl"), &train_text)?;
        fs::write(dir.join("dev.jsonl"), jsonl(&self.dev)?)?;
        fs::write(dir.join("test.jsonl"), jsonl(&self.test)?)?;
        fs::write(dir.join("kb.json"), serde_json::to_string_pretty(self.kb.records())?)?;
        fs::write(
            dir.join("ontology.json"),
            serde_json::to_string_pretty(&self.ontology)?,
        )?;
        let corpus = parse_corpus(&train_text, Split::Train)?;
        let lex = Lexicons::from_corpus(&corpus);
        TemplateBank::build_from_corpus(&corpus, &lex).save(&dir.join("templates.json"))?;
        Ok(self.summary())
    }
}

/// Generates and writes a full dataset in one step.
pub fn gen_data(spec: &ToyDomainSpec, seed: u64, dir: &Path) -> Result<GenSummary, ToyError> {
    generate(spec, seed)?.write(dir)
}
