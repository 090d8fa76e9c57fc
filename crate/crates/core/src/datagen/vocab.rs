//! Measurement names, units and abbreviations used to give synthetic items
//! human-readable descriptions, plus the generic concepts seeded into the
//! mini-ontology.

pub(crate) struct Analyte {
    pub name: &'static str,
    pub unit: &'static str,
    /// Alternative label used by the newer record system for some items.
    pub abbrev: Option<&'static str>,
    /// Whether the ontology knows the abbreviation.
    pub abbrev_in_ontology: bool,
}

const fn a(name: &'static str, unit: &'static str) -> Analyte {
    Analyte {
        name,
        unit,
        abbrev: None,
        abbrev_in_ontology: false,
    }
}

const fn ab(name: &'static str, unit: &'static str, abbrev: &'static str, known: bool) -> Analyte {
    Analyte {
        name,
        unit,
        abbrev: Some(abbrev),
        abbrev_in_ontology: known,
    }
}

pub(crate) const ANALYTES: &[Analyte] = &[
    ab("heart rate", "bpm", "hr", true),
    ab("respiratory rate", "insp/min", "rr", false),
    ab("arterial blood pressure systolic", "mmHg", "art bp systolic", false),
    ab("arterial blood pressure diastolic", "mmHg", "art bp diastolic", false),
    ab("arterial blood pressure mean", "mmHg", "map", true),
    ab("non invasive blood pressure systolic", "mmHg", "nbp systolic", false),
    ab("non invasive blood pressure diastolic", "mmHg", "nbp diastolic", false),
    ab("non invasive blood pressure mean", "mmHg", "nbp mean", false),
    a("temperature", "deg C"),
    ab("oxygen saturation", "%", "spo2", true),
    ab("white blood cell count", "K/uL", "wbc", true),
    ab("red blood cell count", "m/uL", "rbc", true),
    a("platelet count", "K/uL"),
    ab("hemoglobin", "g/dL", "hgb", false),
    ab("hematocrit", "%", "hct", true),
    a("glucose", "mg/dL"),
    a("sodium", "mEq/L"),
    a("potassium", "mEq/L"),
    a("chloride", "mEq/L"),
    ab("bicarbonate", "mEq/L", "hco3", false),
    ab("blood urea nitrogen", "mg/dL", "bun", true),
    a("creatinine", "mg/dL"),
    a("calcium", "mg/dL"),
    a("magnesium", "mg/dL"),
    a("phosphate", "mg/dL"),
    a("lactate", "mmol/L"),
    a("arterial ph", "units"),
    ab("partial pressure of oxygen", "mmHg", "pao2", true),
    ab("partial pressure of carbon dioxide", "mmHg", "paco2", false),
    a("base excess", "mEq/L"),
    a("albumin", "g/dL"),
    a("total bilirubin", "mg/dL"),
    ab("alanine aminotransferase", "IU/L", "alt", true),
    ab("aspartate aminotransferase", "IU/L", "ast", false),
    a("alkaline phosphatase", "IU/L"),
    ab("prothrombin time", "sec", "pt", false),
    ab("partial thromboplastin time", "sec", "ptt", true),
    ab("international normalized ratio", "ratio", "inr", true),
    a("fibrinogen", "mg/dL"),
    a("troponin", "ng/mL"),
    a("creatine kinase", "IU/L"),
    ab("central venous pressure", "mmHg", "cvp", true),
    ab("pulmonary artery pressure systolic", "mmHg", "pap systolic", false),
    ab("pulmonary artery pressure diastolic", "mmHg", "pap diastolic", false),
    ab("pulmonary artery pressure mean", "mmHg", "pap mean", false),
    a("cardiac output", "L/min"),
    a("cardiac index", "L/min/m2"),
    ab("systemic vascular resistance", "dyn s/cm5", "svr", false),
    ab("fraction inspired oxygen", "%", "fio2", true),
    ab("positive end expiratory pressure", "cmH2O", "peep", true),
    a("tidal volume", "mL"),
    a("peak inspiratory pressure", "cmH2O"),
    a("plateau pressure", "cmH2O"),
    a("respiratory rate set", "insp/min"),
    ab("glasgow coma scale total", "points", "gcs total", true),
    a("glasgow coma scale eye opening", "points"),
    a("glasgow coma scale verbal response", "points"),
    a("glasgow coma scale motor response", "points"),
    a("weight", "kg"),
    a("urine output", "mL"),
    a("anion gap", "mEq/L"),
    ab("mean corpuscular volume", "fL", "mcv", true),
    ab("mean corpuscular hemoglobin", "pg", "mch", false),
    ab("red cell distribution width", "%", "rdw", true),
    a("lymphocytes", "%"),
    a("neutrophils", "%"),
    a("ionized calcium", "mmol/L"),
    a("cholesterol", "mg/dL"),
];

/// Broad concepts whose synonyms occur inside more specific descriptions.
pub(crate) const GENERIC_CONCEPTS: &[&str] = &[
    "blood pressure",
    "pressure",
    "rate",
    "count",
    "glasgow coma scale",
    "oxygen",
    "blood",
];
