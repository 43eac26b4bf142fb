//! The built-in test corpus: the symmetric anchor economy, a mirrored-CES
//! family with three equilibria each, seeded random economies and
//! constructed no-trade fixtures.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::economy::{economy_from_json, Allocation, Economy, Price, UtilitySpec};
use crate::error::Result;

/// Fixed seed behind the random part of the corpus.
pub const CORPUS_SEED: u64 = 62_831_853;

/// Number of seeded random economies in the standard corpus.
pub const RANDOM_ECONOMY_COUNT: usize = 50;

/// Number of constructed no-trade fixtures in the standard corpus.
pub const NO_TRADE_COUNT: usize = 50;

const E1_JSON: &str = include_str!("../corpus/e1.json");
const E2_JSON: &str = include_str!("../corpus/e2.json");

/// A named economy plus its endowment allocation.
#[derive(Debug, Clone)]
pub struct CorpusEconomy {
    pub name: String,
    pub economy: Economy,
    pub endowments: Allocation,
}

/// A constructed no-trade equilibrium: endowments equal demands at `price`,
/// so `(price, endowments)` is an equilibrium by construction.
#[derive(Debug, Clone)]
pub struct NoTradeFixture {
    pub name: String,
    pub economy: Economy,
    pub endowments: Allocation,
    pub price: Price,
}

/// The symmetric two-trader Cobb-Douglas anchor with its unique equilibrium
/// at unit prices.
pub fn e1() -> CorpusEconomy {
    let (economy, endowments) = economy_from_json(E1_JSON).expect("embedded e1 corpus parses");
    CorpusEconomy {
        name: "e1".into(),
        economy,
        endowments,
    }
}

/// The mirrored-CES economy with three equilibria at
/// `p_1 ~ {0.1287, 1, 7.7693}` and indices (+1, -1, +1).
pub fn e2() -> CorpusEconomy {
    let (economy, endowments) = economy_from_json(E2_JSON).expect("embedded e2 corpus parses");
    CorpusEconomy {
        name: "e2".into(),
        economy,
        endowments,
    }
}

fn mirrored_ces(
    name: &str,
    share: f64,
    elasticity: f64,
    specialization: f64,
) -> CorpusEconomy {
    let economy = Economy::new(
        vec![
            UtilitySpec::Ces {
                shares: vec![share, 1.0 - share],
                elasticity,
            },
            UtilitySpec::Ces {
                shares: vec![1.0 - share, share],
                elasticity,
            },
        ],
        DVector::from_vec(vec![1.0, 1.0]),
    )
    .expect("mirrored CES economy is valid");
    let endowments = Allocation::new(
        vec![
            DVector::from_vec(vec![specialization, 1.0 - specialization]),
            DVector::from_vec(vec![1.0 - specialization, specialization]),
        ],
        economy.resources(),
    )
    .expect("mirrored endowments are valid");
    CorpusEconomy {
        name: name.into(),
        economy,
        endowments,
    }
}

/// The multiplicity family: mirrored-CES economies whose truncated excess
/// demand has three sign changes on the scan range. The two interior-endowment
/// members allow transfers in both directions for every trader.
pub fn e2_family() -> Vec<CorpusEconomy> {
    vec![
        e2(),
        mirrored_ces("e2-a92-s10", 0.92, 0.10, 1.0),
        mirrored_ces("e2-a94-s13", 0.94, 0.13, 1.0),
        mirrored_ces("e2-a96-s17", 0.96, 0.17, 1.0),
        mirrored_ces("e2-interior-a96-s14", 0.96, 0.14, 0.95),
        mirrored_ces("e2-interior-a97-s15", 0.97, 0.15, 0.95),
    ]
}

fn random_spec(rng: &mut ChaCha8Rng, goods: usize) -> UtilitySpec {
    if rng.gen_bool(0.5) {
        let raw: Vec<f64> = (0..goods).map(|_| rng.gen_range(0.5..1.5)).collect();
        let total: f64 = raw.iter().sum();
        UtilitySpec::CobbDouglas {
            weights: raw.iter().map(|w| w / total).collect(),
        }
    } else {
        UtilitySpec::Ces {
            shares: (0..goods).map(|_| rng.gen_range(0.5..1.5)).collect(),
            elasticity: if rng.gen_bool(0.5) {
                rng.gen_range(0.4..0.8)
            } else {
                rng.gen_range(1.4..3.0)
            },
        }
    }
}

/// Seeded random economies with 2 to 4 traders and goods, interior
/// endowments and moderate preference heterogeneity.
pub fn random_economies(seed: u64, count: usize) -> Vec<CorpusEconomy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|idx| {
            let traders = rng.gen_range(2..=4usize);
            let goods = rng.gen_range(2..=4usize);
            let utilities: Vec<UtilitySpec> =
                (0..traders).map(|_| random_spec(&mut rng, goods)).collect();
            let rows: Vec<DVector<f64>> = (0..traders)
                .map(|_| {
                    DVector::from_iterator(goods, (0..goods).map(|_| rng.gen_range(0.2..1.2)))
                })
                .collect();
            let mut resources = DVector::zeros(goods);
            for row in &rows {
                resources += row;
            }
            let economy =
                Economy::new(utilities, resources).expect("random economy is valid");
            let endowments =
                Allocation::new(rows, economy.resources()).expect("random endowments are valid");
            CorpusEconomy {
                name: format!("random-{idx:03}"),
                economy,
                endowments,
            }
        })
        .collect()
}

/// Build the no-trade economy for the given utilities, price and incomes:
/// endowments are the demands, total resources their sum.
pub fn no_trade_economy(
    utilities: Vec<UtilitySpec>,
    price: &Price,
    incomes: &[f64],
) -> Result<(Economy, Allocation)> {
    let mut rows = Vec::with_capacity(utilities.len());
    for (spec, &w) in utilities.iter().zip(incomes) {
        rows.push(spec.demand(price, w)?);
    }
    let mut resources = DVector::zeros(price.len());
    for row in &rows {
        resources += row;
    }
    let economy = Economy::new(utilities, resources)?;
    let endowments = Allocation::new(rows, economy.resources())?;
    Ok((economy, endowments))
}

/// Seeded family of no-trade fixtures across random utilities, prices and
/// incomes.
pub fn no_trade_fixtures(seed: u64, count: usize) -> Vec<NoTradeFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NO_TRADE_TAG);
    (0..count)
        .map(|idx| {
            let traders = rng.gen_range(2..=4usize);
            let goods = rng.gen_range(2..=4usize);
            let utilities: Vec<UtilitySpec> =
                (0..traders).map(|_| random_spec(&mut rng, goods)).collect();
            let truncated = DVector::from_iterator(
                goods - 1,
                (0..goods - 1).map(|_| 10f64.powf(rng.gen_range(-1.0..1.0))),
            );
            let price = Price::from_truncated(&truncated).expect("positive random price");
            let incomes: Vec<f64> = (0..traders).map(|_| rng.gen_range(0.5..2.0)).collect();
            let (economy, endowments) = no_trade_economy(utilities, &price, &incomes)
                .expect("no-trade construction succeeds for interior incomes");
            NoTradeFixture {
                name: format!("no-trade-{idx:03}"),
                economy,
                endowments,
                price,
            }
        })
        .collect()
}

/// Domain separator so the no-trade stream differs from the economy stream.
const NO_TRADE_TAG: u64 = 0x6e6f_5f74_7261_6465;

/// Everything `verify` scans: the anchor, the multiplicity family and the
/// seeded random economies.
pub fn full_corpus() -> Vec<CorpusEconomy> {
    let mut all = vec![e1()];
    all.extend(e2_family());
    all.extend(random_economies(CORPUS_SEED, RANDOM_ECONOMY_COUNT));
    all
}
