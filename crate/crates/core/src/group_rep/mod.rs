//! Presentation of the fundamental group, its integer representation and the
//! spectral checks on the images.

pub mod matrix;
pub mod rep;
pub mod solve;
pub mod spectral;
pub mod word;

pub use matrix::{IntMatrix, MatrixError};
pub use rep::{
    build_blocks, build_blocks_dim, build_representation, build_representation_unchecked,
    c_power, check_relators, eval_word, ExponentTuple, RelatorReport, RepError, Representation,
};
pub use solve::{count_solutions, solve_exponents, ExponentRanges};
pub use spectral::{
    common_splitting, maps_stable_to_unstable, spectral_check, CommonSplitting, SpectralError,
    SpectralReport, Splitting,
};
pub use word::{parse_presentation, parse_word, parse_word_in, GroupPresentation, ParseError, Word};

/// The matrices whose eigenspaces must coincide:
/// `rho(theta_i)`, `rho(a_i b_i)`, `rho(a_i b_i^-1)` and `rho(c)`.
pub fn checked_matrix_list(rep: &Representation) -> Result<Vec<(String, IntMatrix)>, RepError> {
    let mut out = Vec::new();
    for i in 1..=4 {
        for w in [
            format!("theta{i}"),
            format!("a{i}*b{i}"),
            format!("a{i}*b{i}^-1"),
        ] {
            let word = parse_word(&w).expect("valid word");
            out.push((w, eval_word(rep, &word)?));
        }
    }
    out.push(("c".to_string(), eval_word(rep, &Word::letter("c", 1))?));
    Ok(out)
}
