//! The bundled benchmark manifest: 812 tasks over 180 templates in six
//! site domains, each executable against the demo world.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::record::Split;

/// Domain name and template count.
pub const DOMAINS: [(&str, usize); 6] = [
    ("shopping", 40),
    ("shopping_admin", 36),
    ("reddit", 28),
    ("gitlab", 36),
    ("map", 24),
    ("multi", 16),
];

/// Templates carrying a fifth instance; the rest have four.
const FIVE_INSTANCE_TEMPLATES: usize = 92;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Customer {
    Alice,
    Bob,
}

impl Customer {
    pub fn name(self) -> &'static str {
        match self {
            Customer::Alice => "Alice",
            Customer::Bob => "Bob",
        }
    }

    pub fn user_id(self) -> &'static str {
        match self {
            Customer::Alice => "u-alice",
            Customer::Bob => "u-bob",
        }
    }

    pub fn email(self) -> &'static str {
        match self {
            Customer::Alice => "alice@example.com",
            Customer::Bob => "bob@example.com",
        }
    }

    /// Order ids the demo shop holds for this customer.
    pub fn order_ids(self) -> Vec<String> {
        let (first, n) = match self {
            Customer::Alice => (1001, 5),
            Customer::Bob => (2001, 2),
        };
        (first..first + n).map(|i| format!("o-{i}")).collect()
    }
}

/// What a task asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    OrderCount { customer: Customer },
    Balance,
    CountThenMail { customer: Customer },
    OrderTotals { customer: Customer },
    BrowseCount,
}

impl Scenario {
    pub fn level(self) -> u8 {
        match self {
            Scenario::OrderCount { .. } | Scenario::Balance => 1,
            Scenario::CountThenMail { .. } => 2,
            Scenario::OrderTotals { .. } | Scenario::BrowseCount => 3,
        }
    }
}

/// How the scripted backend behaves on a task. Real benchmarks fail for
/// many reasons; the synthetic one needs a deterministic mix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behaviour {
    Clean,
    WrongAnswer,
    Stuck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTask {
    pub task_id: String,
    pub template_id: String,
    pub domain: String,
    pub intent: String,
    pub level: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub scenario: Scenario,
    pub behaviour: Behaviour,
}

fn scenario_for(template_index: usize, instance: usize) -> Scenario {
    let customer = if instance % 2 == 0 { Customer::Alice } else { Customer::Bob };
    match template_index % 5 {
        0 => Scenario::OrderCount { customer },
        1 => Scenario::Balance,
        2 => Scenario::CountThenMail { customer },
        3 => Scenario::OrderTotals { customer },
        _ => Scenario::BrowseCount,
    }
}

fn intent_for(domain: &str, scenario: Scenario) -> String {
    let ask = match scenario {
        Scenario::OrderCount { customer } => format!("How many orders has {} placed?", customer.name()),
        Scenario::Balance => "What is the balance of account u1?".to_string(),
        Scenario::CountThenMail { customer } => {
            format!("Count the orders {} placed, then email the count to them.", customer.name())
        }
        Scenario::OrderTotals { customer } => format!("List the total of every order {} placed.", customer.name()),
        Scenario::BrowseCount => "How many orders are listed on the shop website?".to_string(),
    };
    format!("[{domain}] {ask}")
}

/// The bundled 812-task manifest, in template order.
pub fn bundled_manifest() -> Vec<BenchTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0812);
    let mut tasks = Vec::new();
    let mut global = 0usize;
    for (domain, count) in DOMAINS {
        for t in 0..count {
            // A coprime stride spreads the five-instance templates over every domain.
            let instances = if (global * 37) % 180 < FIVE_INSTANCE_TEMPLATES { 5 } else { 4 };
            let template_id = format!("{domain}-{t:02}");
            for i in 0..instances {
                let scenario = scenario_for(global, i);
                let roll: f64 = rng.random();
                let behaviour = if roll < 0.62 {
                    Behaviour::Clean
                } else if roll < 0.78 {
                    Behaviour::WrongAnswer
                } else {
                    Behaviour::Stuck
                };
                tasks.push(BenchTask {
                    task_id: format!("{template_id}-{i}"),
                    template_id: template_id.clone(),
                    domain: domain.to_string(),
                    intent: intent_for(domain, scenario),
                    level: Some(scenario.level()),
                    split: None,
                    scenario,
                    behaviour,
                });
            }
            global += 1;
        }
    }
    tasks
}
