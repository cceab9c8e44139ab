//! Built-in scenarios, one per reproduced figure.

macro_rules! preset {
    ($id:literal) => {
        ($id, include_str!(concat!("presets/", $id, ".toml")))
    };
}

const PRESETS: [(&str, &str); 9] = [
    preset!("fig2_pdf_compare"),
    preset!("fig3_ook_vs_M"),
    preset!("fig4_4pam_floor_compare"),
    preset!("fig5_4pam_vs_snr"),
    preset!("fig6_constellation_opt"),
    preset!("fig7_ser_opt_vs_M"),
    preset!("fig8_sparse_los_opt"),
    preset!("fig9_sparse_nlos_aed"),
    preset!("fig10_sparse_nlos_ied"),
];

pub fn ids() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(id, _)| *id)
}

/// Scenario text of a preset, as it would appear in a config file.
pub fn text(id: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(p, _)| *p == id).map(|(_, t)| *t)
}
