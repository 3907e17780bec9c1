//! Value domains shared by the synthetic rule catalog and the request generator.

pub const CANCER_TYPES: [&str; 4] = ["Breast", "Lung", "Prostate", "Colon"];

pub const MELDINGSTYPER: [&str; 5] = ["K", "H", "M", "P", "S"];

pub const METASTASER: [&str; 8] = ["0", "A", "B", "C", "D", "9", "5", "1"];

pub const EKSTRALOKALISASJONER: [&str; 5] = ["0000", "7777", "1234", "5555", "9999"];

/// Two-digit topography prefixes; the first four are the site prefixes of
/// [`CANCER_TYPES`] in order.
pub const TOPOGRAFI_PREFIXES: [&str; 12] = [
    "50", "34", "61", "18", "48", "51", "52", "53", "54", "55", "56", "57",
];

/// Full topography codes used by exclusion lists.
pub const TOPOGRAFI_CODES: [&str; 10] = [
    "481", "482", "488", "509", "569", "570", "579", "619", "340", "189",
];

pub const FIRST_YEAR: i32 = 2012;
pub const LAST_YEAR: i32 = 2022;

/// Topography prefix of a cancer type's primary site.
pub fn site_prefix(cancer_type: &str) -> Option<&'static str> {
    CANCER_TYPES
        .iter()
        .position(|t| *t == cancer_type)
        .map(|i| TOPOGRAFI_PREFIXES[i])
}

pub fn years() -> Vec<String> {
    (FIRST_YEAR..=LAST_YEAR).map(|y| y.to_string()).collect()
}
