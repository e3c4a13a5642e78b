//! MaxVol row selection: a square, well-conditioned subsystem of the cage
//! coordinates that turns cage fitting into an exact solve.

mod maxvol;

pub use maxvol::{maxvol_select, maxvol_select_with, MaxVolSelection, MAXVOL_MAX_SWAPS, MAXVOL_TAU};
