//! CSV output.

use stratcomm::rd::RDPoint;

pub const RD_HEADER: &str = "R_bits,beta,sigma_s2,D_E,D_D,D_E_paper,D_D_paper,I_YW_bits";

/// 17 significant digits; `inf`, `-inf` and `nan` spelled out.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

pub fn rd_csv(points: &[RDPoint]) -> String {
    let mut s = String::from(RD_HEADER);
    s.push('\n');
    for p in points {
        let row = [
            p.rate,
            p.beta,
            p.sigma_s2,
            p.distortions.d_e,
            p.distortions.d_d,
            p.d_e_paper.unwrap_or(f64::NAN),
            p.d_d_paper.unwrap_or(f64::NAN),
            p.i_yw,
        ];
        s.push_str(&row.map(fmt17).join(","));
        s.push('\n');
    }
    s
}
