//! Template-driven synthetic dialogues over the hotel and train domains.
//!
//! The system side follows a fixed policy: while more than one entity
//! matches, report the count and ask for the next missing search slot; once a
//! single entity matches, offer it and ask about booking; then confirm the
//! booking or ask whether anything else is needed, answer requested
//! attributes, and say goodbye. The user side varies its wording but only
//! ever utters values that end up in the belief state, so gold annotations
//! are consistent with the context by construction.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dialogue, DomainGoal, Goal};
use crate::database::{query_turn, Database, EntityRow, TurnQuery};
use crate::error::{Error, Result};
use crate::lexicon::lexicalize;
use crate::ontology::{Ontology, SlotKind};
use crate::schema::{ActionTriplet, BeliefState, Turn};

const HOTEL: &str = "hotel";
const TRAIN: &str = "train";
const HOTEL_SEARCH: [&str; 4] = ["area", "pricerange", "type", "stars"];
const TRAIN_SEARCH: [&str; 4] = ["departure", "destination", "day", "leaveat"];
const STREETS: [&str; 8] = [
    "mill road",
    "station road",
    "regent street",
    "hills road",
    "chesterton road",
    "newmarket road",
    "castle street",
    "milton road",
];
const TRAIN_CLUSTERS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub dialogues: Vec<Dialogue>,
    pub database: Database,
}

impl SyntheticCorpus {
    /// Splits off the last `n` dialogues as a held-out set.
    pub fn split_last(mut self, n: usize) -> (Vec<Dialogue>, Vec<Dialogue>, Database) {
        let cut = self.dialogues.len().saturating_sub(n);
        let test = self.dialogues.split_off(cut);
        (self.dialogues, test, self.database)
    }
}

/// Generates `num_dialogues` dialogues and the database they talk about.
/// The output is a pure function of the ontology and seed.
pub fn generate_synthetic_corpus(ontology: &Ontology, num_dialogues: usize, seed: u64) -> Result<SyntheticCorpus> {
    check_ontology(ontology)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let database = build_database(ontology, &mut rng);
    let gen = Generator {
        ontology,
        db: &database,
        hotels: database.rows(HOTEL).to_vec(),
        trains: database.rows(TRAIN).to_vec(),
    };
    let mut dialogues = Vec::with_capacity(num_dialogues);
    for i in 0..num_dialogues {
        dialogues.push(gen.dialogue(format!("sd{i:05}"), &mut rng)?);
    }
    Ok(SyntheticCorpus { dialogues, database })
}

fn check_ontology(ontology: &Ontology) -> Result<()> {
    ontology.validate()?;
    let need: [(&str, &[&str]); 2] = [
        (HOTEL, &["area", "pricerange", "type", "stars", "name", "book day", "book people", "book stay", "phone", "address", "postcode", "reference"]),
        (TRAIN, &["departure", "destination", "day", "leaveat", "book people", "id", "arriveby", "price", "duration", "reference"]),
    ];
    for (domain, slots) in need {
        let spec = ontology
            .domain(domain)
            .ok_or_else(|| Error::Ontology(format!("the generator needs a {domain:?} domain")))?;
        for s in slots {
            if spec.slot(s).is_none() {
                return Err(Error::Ontology(format!("the generator needs slot {domain}.{s}")));
            }
        }
    }
    let hotel = ontology.domain(HOTEL).unwrap();
    let combos: usize = HOTEL_SEARCH
        .iter()
        .map(|s| hotel.slot(s).unwrap().values.len())
        .product();
    let names = hotel.slot("name").unwrap().values.len();
    if names < 3 || combos < names {
        return Err(Error::Ontology(format!(
            "{names} hotel names cannot be given distinct search attributes ({combos} combinations)"
        )));
    }
    let train = ontology.domain(TRAIN).unwrap();
    if train.slot("departure").unwrap().values.len() < 2 || train.slot("leaveat").unwrap().values.len() < 4 {
        return Err(Error::Ontology("too few train places or departure times".into()));
    }
    Ok(())
}

fn values<'o>(ontology: &'o Ontology, domain: &str, slot: &str) -> &'o [String] {
    &ontology.domain(domain).unwrap().slot(slot).unwrap().values
}

fn row(domain: &str, attrs: Vec<(&str, String)>) -> EntityRow {
    EntityRow {
        domain: domain.into(),
        attributes: attrs.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
    }
}

fn reference(rng: &mut ChaCha8Rng) -> String {
    const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    const ALNUM: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
    let mut s = String::new();
    s.push(*LETTERS.choose(rng).unwrap() as char);
    for _ in 0..7 {
        s.push(*ALNUM.choose(rng).unwrap() as char);
    }
    s
}

fn build_database(ontology: &Ontology, rng: &mut ChaCha8Rng) -> Database {
    let mut db = Database::new();

    let mut combos: Vec<Vec<String>> = vec![Vec::new()];
    for slot in HOTEL_SEARCH {
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                values(ontology, HOTEL, slot).iter().map(move |v| {
                    let mut c = prefix.clone();
                    c.push(v.clone());
                    c
                })
            })
            .collect();
    }
    combos.shuffle(rng);
    for (name, combo) in values(ontology, HOTEL, "name").iter().zip(combos) {
        let letters = b"abcdefghjklmnpqrstuvwxyz";
        let postcode = format!(
            "cb{} {}{}{}",
            rng.gen_range(1..6),
            rng.gen_range(1..10),
            *letters.choose(rng).unwrap() as char,
            *letters.choose(rng).unwrap() as char
        );
        let mut attrs: Vec<(&str, String)> = HOTEL_SEARCH.iter().copied().zip(combo).collect();
        attrs.extend([
            ("name", name.clone()),
            ("phone", format!("01223{:06}", rng.gen_range(0..1_000_000))),
            ("address", format!("{} {}", rng.gen_range(1..100), STREETS.choose(rng).unwrap())),
            ("postcode", postcode),
            ("reference", reference(rng)),
        ]);
        db.push(row(HOTEL, attrs));
    }

    let places = values(ontology, TRAIN, "departure");
    let days = values(ontology, TRAIN, "day");
    let times = values(ontology, TRAIN, "leaveat");
    let mut clusters: Vec<(String, String, String)> = Vec::new();
    while clusters.len() < TRAIN_CLUSTERS {
        let dep = places.choose(rng).unwrap().clone();
        let dest = places.choose(rng).unwrap().clone();
        let day = days.choose(rng).unwrap().clone();
        let key = (dep, dest, day);
        if key.0 != key.1 && !clusters.contains(&key) {
            clusters.push(key);
        }
    }
    let mut ids = Vec::new();
    for (dep, dest, day) in clusters {
        let minutes: u32 = rng.gen_range(4..23) * 5;
        let price = format!("{}.{:02}", minutes / 5 + rng.gen_range(2..9), rng.gen_range(0..100));
        let k = rng.gen_range(2..=4);
        let mut leave: Vec<&String> = times.choose_multiple(rng, k).collect();
        leave.sort();
        for t in leave {
            let id = loop {
                let id = format!("tr{}", rng.gen_range(1000..10000));
                if !ids.contains(&id) {
                    break id;
                }
            };
            ids.push(id.clone());
            db.push(row(
                TRAIN,
                vec![
                    ("id", id),
                    ("departure", dep.clone()),
                    ("destination", dest.clone()),
                    ("day", day.clone()),
                    ("leaveat", t.clone()),
                    ("arriveby", add_minutes(t, minutes)),
                    ("price", price.clone()),
                    ("duration", format!("{minutes} minutes")),
                    ("reference", reference(rng)),
                ],
            ));
        }
    }
    db
}

fn add_minutes(hhmm: &str, minutes: u32) -> String {
    let (h, m) = hhmm.split_once(':').expect("times are hh:mm");
    let total = h.parse::<u32>().unwrap() * 60 + m.parse::<u32>().unwrap() + minutes;
    format!("{:02}:{:02}", (total / 60) % 24, total % 60)
}

fn article(word: &str) -> &'static str {
    if word.starts_with(['a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, options: &[&'a str]) -> &'a str {
    options.choose(rng).unwrap()
}

fn fill(template: &str, value: &str) -> String {
    template.replace("{}", value)
}

fn act(domain: &str, action: &str, slot: &str) -> ActionTriplet {
    ActionTriplet::new(domain, action, slot)
}

/// Accumulates turns, computing database summaries and lexicalized system
/// responses from the gold belief.
struct Builder<'a> {
    ontology: &'a Ontology,
    db: &'a Database,
    belief: BeliefState,
    users: Vec<String>,
    turns: Vec<Turn>,
}

impl<'a> Builder<'a> {
    fn query(&self, user: &str) -> TurnQuery {
        let mut users: Vec<&str> = self.users.iter().map(String::as_str).collect();
        users.push(user);
        query_turn(self.db, self.ontology, &users, &self.belief)
    }

    fn push(&mut self, user: String, delex: &str, actions: Vec<ActionTriplet>) -> Result<()> {
        let q = self.query(&user);
        let lex = lexicalize(delex, &self.belief, &q.rows, self.ontology);
        if !lex.unresolved.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "generator produced unresolvable placeholders {:?} in {delex:?}",
                lex.unresolved
            )));
        }
        self.users.push(user.clone());
        self.turns.push(Turn {
            user,
            system: lex.text,
            system_delex: delex.to_string(),
            belief: self.belief.clone(),
            actions,
            db: Some(q.summary),
        });
        Ok(())
    }
}

struct Generator<'a> {
    ontology: &'a Ontology,
    db: &'a Database,
    hotels: Vec<EntityRow>,
    trains: Vec<EntityRow>,
}

#[derive(Clone, Copy, PartialEq)]
enum Plan {
    Hotel,
    Train,
    HotelThenTrain,
    TrainThenHotel,
}

impl<'a> Generator<'a> {
    fn dialogue(&self, id: String, rng: &mut ChaCha8Rng) -> Result<Dialogue> {
        let plan = match rng.gen_range(0..10) {
            0..=2 => Plan::Hotel,
            3..=5 => Plan::Train,
            6..=8 => Plan::HotelThenTrain,
            _ => Plan::TrainThenHotel,
        };
        let hotel = self.hotels.choose(rng).unwrap().clone();
        let train = self.trains.choose(rng).unwrap().clone();
        let mut hotel_goal = self.hotel_goal(&hotel, rng);
        let train_goal = self.train_goal(&train, rng);
        let same_day = plan == Plan::HotelThenTrain && !hotel_goal.book.is_empty() && rng.gen_bool(0.6);
        if same_day {
            hotel_goal
                .book
                .insert("book day".into(), train.get("day").unwrap().to_string());
        }

        let mut b = Builder {
            ontology: self.ontology,
            db: self.db,
            belief: BeliefState::new(),
            users: Vec::new(),
            turns: Vec::new(),
        };
        let mut goal = Goal::default();
        match plan {
            Plan::Hotel => self.hotel_segment(&mut b, &hotel_goal, false, rng)?,
            Plan::Train => self.train_segment(&mut b, &train_goal, false, false, rng)?,
            Plan::HotelThenTrain => {
                self.hotel_segment(&mut b, &hotel_goal, false, rng)?;
                self.train_segment(&mut b, &train_goal, true, same_day, rng)?;
            }
            Plan::TrainThenHotel => {
                self.train_segment(&mut b, &train_goal, false, false, rng)?;
                self.hotel_segment(&mut b, &hotel_goal, true, rng)?;
            }
        }
        if plan != Plan::Train {
            goal.domains.insert(HOTEL.into(), hotel_goal);
        }
        if plan != Plan::Hotel {
            goal.domains.insert(TRAIN.into(), train_goal);
        }
        let bye = pick(
            rng,
            &["that is all , thank you .", "no , that is everything . thanks .", "thank you , goodbye .", "that will be all . bye ."],
        );
        b.push(
            bye.to_string(),
            "thank you for using our service . goodbye .",
            vec![act("general", "bye", "none")],
        )?;
        Ok(Dialogue {
            id,
            goal,
            turns: b.turns,
        })
    }

    fn hotel_goal(&self, target: &EntityRow, rng: &mut ChaCha8Rng) -> DomainGoal {
        let mut g = DomainGoal::default();
        // Named requests are the only source of multi-word values the model
        // must copy verbatim, so they are common enough to learn from.
        if rng.gen_bool(0.4) {
            g.info.insert("name".into(), target.get("name").unwrap().into());
        } else {
            for s in HOTEL_SEARCH {
                g.info.insert(s.into(), target.get(s).unwrap().into());
            }
        }
        if rng.gen_bool(0.6) {
            g.book.insert("book day".into(), pick_value(self.ontology, HOTEL, "book day", rng));
            g.book.insert("book people".into(), rng.gen_range(1..=6).to_string());
            g.book.insert("book stay".into(), rng.gen_range(1..=5).to_string());
        }
        let n = rng.gen_range(0..=2);
        g.reqt = ["phone", "address", "postcode"]
            .choose_multiple(rng, n)
            .map(|s| s.to_string())
            .collect();
        if !g.book.is_empty() {
            g.reqt.push("reference".into());
        }
        g
    }

    fn train_goal(&self, target: &EntityRow, rng: &mut ChaCha8Rng) -> DomainGoal {
        let mut g = DomainGoal::default();
        for s in TRAIN_SEARCH {
            g.info.insert(s.into(), target.get(s).unwrap().into());
        }
        if rng.gen_bool(0.6) {
            g.book.insert("book people".into(), rng.gen_range(1..=6).to_string());
        }
        let n = rng.gen_range(0..=1);
        g.reqt = ["price", "duration"]
            .choose_multiple(rng, n)
            .map(|s| s.to_string())
            .collect();
        if !g.book.is_empty() {
            g.reqt.push("reference".into());
        }
        g
    }

    fn hotel_segment(&self, b: &mut Builder, goal: &DomainGoal, second: bool, rng: &mut ChaCha8Rng) -> Result<()> {
        let prefix = if second {
            pick(rng, &["i also need", "i am also looking for", "i also want"])
        } else {
            pick(rng, &["i am looking for", "i need", "can you help me find", "i want", "please find me"])
        };
        let user = if let Some(name) = goal.info.get("name") {
            b.belief.insert(HOTEL, "name", name);
            format!("{prefix} a place to stay called {name} .")
        } else {
            let k = rng.gen_range(1..=2);
            let mut revealed: Vec<&str> = HOTEL_SEARCH.choose_multiple(rng, k).copied().collect();
            revealed.sort_by_key(|s| HOTEL_SEARCH.iter().position(|x| x == s));
            for s in &revealed {
                b.belief.insert(HOTEL, s, &goal.info[*s]);
            }
            let has = |s: &str| revealed.contains(&s);
            let mut words = Vec::new();
            if has("pricerange") {
                words.push(goal.info["pricerange"].clone());
            }
            if has("stars") {
                words.push(format!("{} star", goal.info["stars"]));
            }
            words.push(if has("type") {
                goal.info["type"].clone()
            } else {
                "place to stay".to_string()
            });
            let mut phrase = format!("{} {}", article(&words[0]), words.join(" "));
            if has("area") {
                phrase.push_str(&format!(" in the {}", goal.info["area"]));
            }
            format!("{prefix} {phrase} {}", pick(rng, &[".", "please .", ", thanks ."]))
        };
        self.search_until_offer(b, HOTEL, goal, user, rng)?;
        self.after_offer(b, HOTEL, goal, rng)
    }

    fn train_segment(&self, b: &mut Builder, goal: &DomainGoal, second: bool, same_day: bool, rng: &mut ChaCha8Rng) -> Result<()> {
        let prefix = if second {
            pick(rng, &["i also need a train", "i am also looking for a train", "i also need to book a train"])
        } else {
            pick(rng, &["i need a train", "i am looking for a train", "can you find me a train", "i want to take a train"])
        };
        let pool: &[&str] = if same_day {
            &["departure", "destination"]
        } else {
            &["departure", "destination", "day"]
        };
        let k = rng.gen_range(1..=2);
        let mut revealed: Vec<&str> = pool.choose_multiple(rng, k).copied().collect();
        if same_day {
            revealed.push("day");
        }
        revealed.sort_by_key(|s| TRAIN_SEARCH.iter().position(|x| x == s));
        let mut user = prefix.to_string();
        for s in &revealed {
            let v = &goal.info[*s];
            b.belief.insert(TRAIN, s, v);
            match *s {
                "departure" => user.push_str(&format!(" from {v}")),
                "destination" => user.push_str(&format!(" to {v}")),
                _ if same_day => user.push_str(" on the same day"),
                _ => user.push_str(&format!(" on {v}")),
            }
        }
        user.push_str(" .");
        self.search_until_offer(b, TRAIN, goal, user, rng)?;
        self.after_offer(b, TRAIN, goal, rng)
    }

    /// Asks for missing search slots until one entity matches, then offers it.
    fn search_until_offer(&self, b: &mut Builder, domain: &str, goal: &DomainGoal, mut user: String, rng: &mut ChaCha8Rng) -> Result<()> {
        let order: &[&str] = if domain == HOTEL { &HOTEL_SEARCH } else { &TRAIN_SEARCH };
        loop {
            let q = b.query(&user);
            if q.domain.as_deref() != Some(domain) {
                return Err(Error::InvalidArgument(format!("utterance {user:?} is not recognised as {domain}")));
            }
            match q.rows.len() {
                0 => return Err(Error::InvalidArgument(format!("goal for {domain} has no matching entity"))),
                1 => {
                    let (delex, actions) = offer(domain);
                    return b.push(user, delex, actions);
                }
                _ => {
                    let next = order
                        .iter()
                        .copied()
                        .find(|s| b.belief.get(domain, s).is_none())
                        .ok_or_else(|| Error::InvalidArgument(format!("{domain} search tuple is not unique")))?;
                    let delex = request(domain, next);
                    b.push(
                        user,
                        &delex,
                        vec![act(domain, "inform", "choice"), act(domain, "request", next)],
                    )?;
                    let value = goal.info[next].clone();
                    b.belief.insert(domain, next, &value);
                    user = answer(next, &value, rng);
                }
            }
        }
    }

    fn after_offer(&self, b: &mut Builder, domain: &str, goal: &DomainGoal, rng: &mut ChaCha8Rng) -> Result<()> {
        let asks: Vec<&str> = goal
            .reqt
            .iter()
            .map(String::as_str)
            .filter(|s| *s != "reference")
            .collect();
        if !goal.book.is_empty() {
            for (s, v) in &goal.book {
                b.belief.insert(domain, s, v);
            }
            let user = if domain == HOTEL {
                let (p, s, d) = (&goal.book["book people"], &goal.book["book stay"], &goal.book["book day"]);
                let t = pick(
                    rng,
                    &[
                        "yes please . book it for {p} people for {s} nights from {d} .",
                        "yes , i need it for {p} people for {s} nights starting {d} .",
                        "please book it for {p} people and {s} nights from {d} .",
                    ],
                );
                t.replace("{p}", p).replace("{s}", s).replace("{d}", d)
            } else {
                let t = pick(
                    rng,
                    &["yes , book it for {} people .", "yes please , for {} people .", "please book it for {} people ."],
                );
                fill(t, &goal.book["book people"])
            };
            b.push(
                user,
                &format!("booking was successful . your reference number is [{domain}_reference] ."),
                vec![act(domain, "offerbooked", "reference")],
            )?;
            if !asks.is_empty() {
                let ack = pick(rng, &["thanks .", "great .", "perfect ."]);
                let user = format!("{ack} {}", request_utterance(&asks, rng));
                let (delex, actions) = answers(domain, &asks);
                b.push(user, &delex, actions)?;
            }
        } else {
            let decline = pick(rng, &["no , i do not need to book .", "no thanks .", "not right now ."]);
            if asks.is_empty() {
                b.push(
                    decline.to_string(),
                    "okay . is there anything else i can help with ?",
                    vec![act("general", "reqmore", "none")],
                )?;
            } else {
                let user = format!("{decline} {}", request_utterance(&asks, rng));
                let (delex, actions) = answers(domain, &asks);
                b.push(user, &delex, actions)?;
            }
        }
        Ok(())
    }
}

fn pick_value(ontology: &Ontology, domain: &str, slot: &str, rng: &mut ChaCha8Rng) -> String {
    values(ontology, domain, slot).choose(rng).unwrap().clone()
}

fn offer(domain: &str) -> (&'static str, Vec<ActionTriplet>) {
    if domain == HOTEL {
        (
            "[hotel_name] is a [value_type] in the [value_area] . shall i book it ?",
            vec![
                act(HOTEL, "inform", "name"),
                act(HOTEL, "inform", "type"),
                act(HOTEL, "inform", "area"),
                act(HOTEL, "offerbook", "none"),
            ],
        )
    } else {
        (
            "[train_id] leaves at [value_time] and arrives at [value_time] . shall i book it ?",
            vec![
                act(TRAIN, "inform", "id"),
                act(TRAIN, "inform", "leaveat"),
                act(TRAIN, "inform", "arriveby"),
                act(TRAIN, "offerbook", "none"),
            ],
        )
    }
}

fn request(domain: &str, slot: &str) -> String {
    let question = match slot {
        "area" => "what area would you like ?",
        "pricerange" => "what price range would you like ?",
        "type" => "would you like a hotel or a guesthouse ?",
        "stars" => "how many stars would you like ?",
        "departure" => "where will you be leaving from ?",
        "destination" => "where are you going ?",
        "day" => "what day will you travel ?",
        _ => "what time would you like to leave ?",
    };
    let noun = if domain == HOTEL { "places" } else { "trains" };
    format!("there are [value_count] {noun} that match . {question}")
}

fn answer(slot: &str, value: &str, rng: &mut ChaCha8Rng) -> String {
    let templates: &[&str] = match slot {
        "area" => &["the {} please .", "in the {} .", "i would like the {} .", "somewhere in the {} ."],
        "pricerange" => &["{} please .", "something {} .", "i want a {} one ."],
        "type" => &["a {} please .", "i prefer a {} .", "it should be a {} ."],
        "stars" => &["{} stars please .", "it should have {} stars .", "{} stars ."],
        "departure" => &["from {} .", "i am leaving from {} .", "i will depart from {} ."],
        "destination" => &["to {} .", "i am going to {} .", "i want to go to {} ."],
        "day" => &["on {} .", "i want to travel on {} .", "{} please ."],
        _ => &["at {} .", "i want to leave at {} .", "the {} one please ."],
    };
    fill(pick(rng, templates), value)
}

fn attribute_phrase(slot: &str) -> (&'static str, &'static str) {
    match slot {
        "phone" => ("the phone number", "the phone number is [hotel_phone]"),
        "address" => ("the address", "the address is [hotel_address]"),
        "postcode" => ("the postcode", "the postcode is [hotel_postcode]"),
        "price" => ("the price", "the price is [value_price]"),
        _ => ("the travel time", "the journey takes [value_duration]"),
    }
}

fn request_utterance(slots: &[&str], rng: &mut ChaCha8Rng) -> String {
    let things: Vec<&str> = slots.iter().map(|s| attribute_phrase(s).0).collect();
    fill(
        pick(rng, &["can i get {} ?", "what is {} ?", "could you tell me {} ?"]),
        &things.join(" and "),
    )
}

fn answers(domain: &str, slots: &[&str]) -> (String, Vec<ActionTriplet>) {
    let parts: Vec<&str> = slots.iter().map(|s| attribute_phrase(s).1).collect();
    let actions = slots.iter().map(|s| act(domain, "inform", s)).collect();
    (format!("{} .", parts.join(" and ")), actions)
}

/// Belief slots of the ontology, for tests and statistics.
pub fn belief_slot_count(ontology: &Ontology) -> usize {
    ontology
        .domains
        .iter()
        .map(|d| d.slots.iter().filter(|s| s.kind != SlotKind::Attribute).count())
        .sum()
}

/// Per-domain entity counts.
pub fn entity_counts(db: &Database) -> BTreeMap<String, usize> {
    db.domains().map(|d| (d.to_string(), db.rows(d).len())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::database::query_turn;
    use crate::lexicon::delexicalize;
    use crate::schema::normalize_text;

    fn corpus(n: usize, seed: u64) -> SyntheticCorpus {
        generate_synthetic_corpus(&Ontology::synthetic(), n, seed).unwrap()
    }

    #[test]
    fn zero_dialogues() {
        let c = corpus(0, 1);
        assert!(c.dialogues.is_empty());
        assert!(c.database.len() >= 20);
    }

    #[test]
    fn deterministic() {
        assert_eq!(corpus(30, 7), corpus(30, 7));
        assert_ne!(corpus(30, 7).dialogues, corpus(30, 8).dialogues);
    }

    #[test]
    fn database_shape() {
        let c = corpus(0, 3);
        let counts = entity_counts(&c.database);
        assert_eq!(counts["hotel"], 24);
        assert!(counts["train"] >= 24);
        assert!(belief_slot_count(&Ontology::synthetic()) >= 8);
        // Search tuples identify entities.
        let mut seen = std::collections::BTreeSet::new();
        for r in c.database.rows("train") {
            let key: Vec<&str> = TRAIN_SEARCH.iter().map(|s| r.get(s).unwrap()).collect();
            assert!(seen.insert(key));
        }
    }

    #[test]
    fn gold_annotations_are_consistent() {
        let o = Ontology::synthetic();
        let c = corpus(200, 11);
        let mut multi = 0;
        let mut same_day = 0;
        for d in &c.dialogues {
            assert!(!d.turns.is_empty());
            if d.goal.domains.len() == 2 {
                multi += 1;
            }
            for (t, turn) in d.turns.iter().enumerate() {
                let users = d.user_utterances(t);
                let q = query_turn(&c.database, &o, &users, &turn.belief);
                assert_eq!(turn.db.as_ref(), Some(&q.summary));
                // Every gold value is grounded in the context.
                let mut context: Vec<String> = users.iter().map(|u| format!(" {} ", normalize_text(u))).collect();
                context.extend(d.turns[..t].iter().map(|x| format!(" {} ", x.system)));
                for (_, _, v) in turn.belief.iter() {
                    assert!(context.iter().any(|c| c.contains(&format!(" {v} "))), "{}: {v}", d.id);
                }
                if turn.user.contains("same day") {
                    same_day += 1;
                }
                // Lexicalization inverts delexicalization on the system side.
                let delex = delexicalize(&turn.system, q.rows.first(), &turn.belief, &o);
                assert_eq!(lexicalize(&delex, &turn.belief, &q.rows, &o).text, turn.system);
                if t > 0 {
                    for (dom, s, v) in d.turns[t - 1].belief.iter() {
                        assert_eq!(turn.belief.get(dom, s), Some(v));
                    }
                }
            }
        }
        assert!(multi > 40);
        assert!(same_day > 5);
    }

    #[test]
    fn rejects_foreign_ontology() {
        let mut o = Ontology::synthetic();
        o.domains.retain(|d| d.name == "hotel");
        assert!(generate_synthetic_corpus(&o, 1, 0).is_err());
    }
}
