mod common;

use common::{de2mfw_path_of_three, delmfw_four_rounds, dofw_three_rounds, fixture};

#[test]
fn delmfw_four_rounds_matches_fixture() {
    assert_eq!(delmfw_four_rounds(), fixture("delmfw_t4.csv"));
}

#[test]
fn de2mfw_path_of_three_matches_fixture() {
    assert_eq!(de2mfw_path_of_three(), fixture("de2mfw_path3.csv"));
}

#[test]
fn dofw_three_rounds_matches_fixture() {
    assert_eq!(dofw_three_rounds(), fixture("dofw_3round.csv"));
}
