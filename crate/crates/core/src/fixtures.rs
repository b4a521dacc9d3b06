//! Built-in datasets: the three-patient example and a synthetic Adult-style
//! census generator with the Q1-Q5 query shapes.
//!
//! The census base population has 48 842 rows drawn from fixed marginal
//! distributions. Sizes up to the base are sampled from it without
//! replacement. Larger sizes keep the base and append copies of base rows in
//! order, each numeric value moved by a uniform integer in `[-2, 2]` and
//! clamped to the column bounds.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{load_dataset, Dataset, DatasetBuilder, Value};
use crate::error::Result;
use crate::query::{Predicate, Query};
use crate::schema::{ColumnKind, ColumnSpec, Schema};

pub const ADULT_BASE_ROWS: usize = 48_842;
pub const DEFAULT_FIXTURE_SEED: u64 = 20_231_107;

pub const PATIENTS_CSV: &str = "P,D\nA,0\nB,0\nC,1\n";

pub fn patient_schema() -> Schema {
    Schema::new(vec![ColumnSpec::categorical("P"), ColumnSpec::integer("D", 0, 1)])
        .expect("static schema")
}

pub fn patients() -> Dataset {
    load_dataset(PATIENTS_CSV.as_bytes(), &patient_schema()).expect("static dataset")
}

/// Number of patients with the disease.
pub fn patient_query() -> Query {
    Query::count(Some(Predicate::eq("D", 1)))
}

pub const WORKCLASS: &[(&str, f64)] = &[
    ("Private", 0.694),
    ("Self-emp-not-inc", 0.079),
    ("Local-gov", 0.064),
    ("Unknown", 0.057),
    ("State-gov", 0.041),
    ("Self-emp-inc", 0.035),
    ("Federal-gov", 0.029),
    ("Without-pay", 0.0005),
    ("Never-worked", 0.0005),
];

pub const EDUCATION: &[(&str, i64, f64)] = &[
    ("Preschool", 1, 0.002),
    ("1st-4th", 2, 0.005),
    ("5th-6th", 3, 0.010),
    ("7th-8th", 4, 0.020),
    ("9th", 5, 0.016),
    ("10th", 6, 0.028),
    ("11th", 7, 0.037),
    ("12th", 8, 0.013),
    ("HS-grad", 9, 0.323),
    ("Some-college", 10, 0.223),
    ("Assoc-voc", 11, 0.042),
    ("Assoc-acdm", 12, 0.033),
    ("Bachelors", 13, 0.164),
    ("Masters", 14, 0.054),
    ("Prof-school", 15, 0.017),
    ("Doctorate", 16, 0.013),
];

pub const MARITAL_STATUS: &[(&str, f64)] = &[
    ("Married-civ-spouse", 0.458),
    ("Never-married", 0.330),
    ("Divorced", 0.136),
    ("Separated", 0.031),
    ("Widowed", 0.031),
    ("Married-spouse-absent", 0.013),
    ("Married-AF-spouse", 0.001),
];

pub const OCCUPATION: &[(&str, f64)] = &[
    ("Prof-specialty", 0.126),
    ("Craft-repair", 0.125),
    ("Exec-managerial", 0.125),
    ("Adm-clerical", 0.115),
    ("Sales", 0.113),
    ("Other-service", 0.101),
    ("Machine-op-inspct", 0.062),
    ("Unknown", 0.058),
    ("Transport-moving", 0.048),
    ("Handlers-cleaners", 0.042),
    ("Farming-fishing", 0.031),
    ("Tech-support", 0.030),
    ("Protective-serv", 0.020),
    ("Priv-house-serv", 0.004),
];

pub const RACE: &[(&str, f64)] = &[
    ("White", 0.855),
    ("Black", 0.096),
    ("Asian-Pac-Islander", 0.031),
    ("Amer-Indian-Eskimo", 0.010),
    ("Other", 0.008),
];

pub const NATIVE_COUNTRY: &[(&str, f64)] = &[
    ("United-States", 0.80),
    ("Mexico", 0.03),
    ("Philippines", 0.02),
    ("Germany", 0.02),
    ("Canada", 0.02),
    ("India", 0.02),
    ("Puerto-Rico", 0.02),
    ("El-Salvador", 0.015),
    ("Cuba", 0.015),
    ("England", 0.015),
    ("China", 0.015),
    ("Jamaica", 0.01),
];

const CAPITAL_GAINS: &[i64] = &[
    594, 914, 991, 1055, 1086, 1151, 1173, 1409, 1424, 1471, 1506, 1639, 1797, 1831, 1848, 2036,
    2050, 2062, 2105, 2174, 2176, 2202, 2228, 2290, 2329, 2346, 2354, 2387, 2407, 2414, 2463, 2538,
    2580, 2597, 2635, 2653, 2829, 2885, 2907, 2936, 2961, 2964, 2977, 2993, 3103, 3137, 3273, 3325,
    3411, 3418, 3432, 3456, 3464, 3471, 3674, 3781, 3818, 3887, 3908, 3942, 4064, 4101, 4386, 4416,
    4508, 4650, 4687, 4787, 4865, 4931, 4934, 5013, 5060, 5178, 5455, 5556, 5721, 6097, 6360, 6418,
    6497, 6514, 6723, 6767, 6849, 7298, 7430, 7443, 7688, 7896, 7978, 8614, 9386, 9562, 10520,
    10566, 10605, 11678, 13550, 14084, 14344, 15020, 15024, 15831, 18481, 20051, 22040, 25124,
    25236, 27828, 34095, 41310, 99999,
];

const CAPITAL_LOSSES: &[i64] = &[
    155, 213, 323, 419, 625, 653, 810, 880, 974, 1092, 1138, 1258, 1340, 1380, 1408, 1411, 1485,
    1504, 1539, 1564, 1573, 1579, 1590, 1594, 1602, 1617, 1628, 1648, 1651, 1668, 1669, 1672, 1719,
    1721, 1726, 1735, 1740, 1741, 1755, 1762, 1816, 1825, 1844, 1848, 1876, 1887, 1902, 1944, 1974,
    1977, 1980, 2001, 2002, 2042, 2051, 2057, 2080, 2129, 2149, 2163, 2174, 2179, 2201, 2205, 2206,
    2231, 2238, 2246, 2258, 2267, 2282, 2339, 2352, 2377, 2392, 2415, 2444, 2457, 2465, 2467, 2472,
    2489, 2547, 2559, 2603, 2754, 2824, 3004, 3683, 3770, 3900, 4356,
];

pub fn adult_schema() -> Schema {
    let int = |name: &str, lo: i64, hi: i64| ColumnSpec::integer(name, lo, hi);
    Schema::new(vec![
        int("age", 17, 90),
        ColumnSpec::categorical("workclass"),
        int("fnlwgt", 12_285, 1_490_400),
        ColumnSpec::categorical("education"),
        int("education_num", 1, 16),
        ColumnSpec::categorical("marital_status"),
        ColumnSpec::categorical("occupation"),
        ColumnSpec::categorical("relationship"),
        ColumnSpec::categorical("race"),
        ColumnSpec::categorical("sex"),
        int("capital_gain", 0, 99_999),
        int("capital_loss", 0, 4_356),
        int("hours_per_week", 1, 99),
        ColumnSpec::categorical("native_country"),
        ColumnSpec::categorical("income"),
    ])
    .expect("static schema")
}

struct Draw(ChaCha8Rng);

impl Draw {
    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn below(&mut self, n: usize) -> usize {
        ((self.unit() * n as f64) as usize).min(n - 1)
    }

    fn range(&mut self, lo: i64, hi: i64) -> i64 {
        lo + self.below((hi - lo + 1) as usize) as i64
    }

    fn weighted<T: Copy>(&mut self, items: &[(T, f64)]) -> T {
        let total: f64 = items.iter().map(|(_, w)| w).sum();
        let mut x = self.unit() * total;
        for (item, w) in items {
            if x < *w {
                return *item;
            }
            x -= w;
        }
        items[items.len() - 1].0
    }

    fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

fn base_row(d: &mut Draw) -> Vec<Value> {
    let age = (38.6 + 13.7 * d.normal()).round().clamp(17.0, 90.0) as i64;
    let workclass = d.weighted(WORKCLASS);
    let fnlwgt = (189_664.0 * (0.5 * d.normal()).exp()).round().clamp(12_285.0, 1_490_400.0) as i64;
    let (education, education_num) = {
        let items: Vec<((&str, i64), f64)> = EDUCATION.iter().map(|(e, n, w)| ((*e, *n), *w)).collect();
        d.weighted(&items)
    };
    let marital = if age < 22 && d.unit() < 0.85 {
        "Never-married"
    } else {
        d.weighted(MARITAL_STATUS)
    };
    let occupation = d.weighted(OCCUPATION);
    let sex = if d.unit() < 0.668 { "Male" } else { "Female" };
    let relationship = match marital {
        "Married-civ-spouse" | "Married-AF-spouse" => {
            if sex == "Male" {
                "Husband"
            } else {
                "Wife"
            }
        }
        _ => d.weighted(&[
            ("Not-in-family", 0.49),
            ("Own-child", 0.30),
            ("Unmarried", 0.20),
            ("Other-relative", 0.06),
        ]),
    };
    let race = d.weighted(RACE);
    let capital_gain = if d.unit() < 0.083 {
        CAPITAL_GAINS[d.below(CAPITAL_GAINS.len())]
    } else {
        0
    };
    let capital_loss = if d.unit() < 0.047 {
        CAPITAL_LOSSES[d.below(CAPITAL_LOSSES.len())]
    } else {
        0
    };
    let hours = if d.unit() < 0.47 {
        40
    } else {
        (40.4 + 12.4 * d.normal()).round().clamp(1.0, 99.0) as i64
    };
    let country = d.weighted(NATIVE_COUNTRY);
    let p_rich = 0.03
        + 0.045 * (education_num - 8).max(0) as f64
        + if (30..=60).contains(&age) { 0.12 } else { 0.0 }
        + if relationship == "Husband" || relationship == "Wife" { 0.18 } else { 0.0 }
        + if capital_gain > 5000 { 0.5 } else { 0.0 };
    let income = if d.unit() < p_rich.min(0.95) { ">50K" } else { "<=50K" };
    vec![
        Value::Integer(age),
        Value::cat(workclass),
        Value::Integer(fnlwgt),
        Value::cat(education),
        Value::Integer(education_num),
        Value::cat(marital),
        Value::cat(occupation),
        Value::cat(relationship),
        Value::cat(race),
        Value::cat(sex),
        Value::Integer(capital_gain),
        Value::Integer(capital_loss),
        Value::Integer(hours),
        Value::cat(country),
        Value::cat(income),
    ]
}

fn jittered(row: &[Value], schema: &Schema, d: &mut Draw) -> Vec<Value> {
    row.iter()
        .zip(schema.columns())
        .map(|(v, c)| match (v, c.kind, c.bounds) {
            (Value::Integer(x), ColumnKind::Integer, Some(b)) => {
                let moved = (x + d.range(-2, 2)) as f64;
                Value::Integer(b.clamp(moved) as i64)
            }
            _ => v.clone(),
        })
        .collect()
}

/// A census-style dataset of `n` rows, deterministic in `(n, seed)`.
pub fn adult(n: usize, seed: u64) -> Result<Dataset> {
    let schema = adult_schema();
    let mut d = Draw(ChaCha8Rng::seed_from_u64(seed));
    let base: Vec<Vec<Value>> = (0..ADULT_BASE_ROWS).map(|_| base_row(&mut d)).collect();
    let mut b = DatasetBuilder::with_capacity(schema.clone(), n);
    if n <= ADULT_BASE_ROWS {
        let mut order: Vec<usize> = (0..ADULT_BASE_ROWS).collect();
        for i in 0..n {
            let j = i + d.below(ADULT_BASE_ROWS - i);
            order.swap(i, j);
        }
        for (i, &r) in order[..n].iter().enumerate() {
            b.push_values(i + 1, base[r].clone())?;
        }
    } else {
        for (i, row) in base.iter().enumerate() {
            b.push_values(i + 1, row.clone())?;
        }
        for i in ADULT_BASE_ROWS..n {
            let row = jittered(&base[i % ADULT_BASE_ROWS], &schema, &mut d);
            b.push_values(i + 1, row)?;
        }
    }
    b.finish()
}

/// The five benchmark query shapes over the census schema.
pub fn adult_queries() -> Vec<(&'static str, Query)> {
    vec![
        (
            "q1",
            Query::count(Some(Predicate::and([
                Predicate::eq("income", ">50K"),
                Predicate::eq("education_num", 13),
                Predicate::eq("age", 25),
            ]))),
        ),
        (
            "q2",
            Query::group_by_count(
                Some(Predicate::and([
                    Predicate::eq("race", "Asian-Pac-Islander"),
                    Predicate::between("age", 30.0, 40.0),
                ])),
                "marital_status",
                MARITAL_STATUS.iter().map(|(m, _)| *m),
            ),
        ),
        (
            "q3",
            Query::count(Some(Predicate::and([
                Predicate::ne("native_country", "United-States"),
                Predicate::eq("sex", "Female"),
            ]))),
        ),
        (
            "q4",
            Query::avg(
                "hours_per_week",
                Some(Predicate::is_in("workclass", ["Federal-gov", "Local-gov", "State-gov"])),
            ),
        ),
        ("q5", Query::sum("capital_gain", None)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::evaluate_query;

    #[test]
    fn sizes_and_determinism() {
        let a = adult(1000, 1).unwrap();
        assert_eq!(a.n(), 1000);
        assert_eq!(a.to_csv_string().unwrap(), adult(1000, 1).unwrap().to_csv_string().unwrap());
        let big = adult(ADULT_BASE_ROWS + 10, 1).unwrap();
        assert_eq!(big.n(), ADULT_BASE_ROWS + 10);
    }

    #[test]
    fn copies_stay_within_two_of_their_source() {
        let big = adult(ADULT_BASE_ROWS + 500, 3).unwrap();
        let age = big.schema().index_of("age").unwrap();
        let country = big.schema().index_of("native_country").unwrap();
        for i in 0..500 {
            let src = big.cell(i, age).as_f64().unwrap();
            let copy = big.cell(ADULT_BASE_ROWS + i, age).as_f64().unwrap();
            assert!((src - copy).abs() <= 2.0);
            assert_eq!(big.cell(i, country), big.cell(ADULT_BASE_ROWS + i, country));
        }
    }

    #[test]
    fn queries_evaluate() {
        let d = adult(1000, DEFAULT_FIXTURE_SEED).unwrap();
        for (name, q) in adult_queries() {
            let out = evaluate_query(&d, &q).unwrap();
            assert_eq!(out.k(), q.k(), "{name}");
        }
    }
}
