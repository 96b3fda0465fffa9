//! Rendered templates against checked-in text. Run with `UPDATE_GOLDENS=1`
//! to rewrite the files after an intentional template change.

mod common;

use nrpa_dialogue::Dataset;

#[test]
fn rendered_templates_match_goldens() {
    let update = std::env::var_os("UPDATE_GOLDENS").is_some();
    for d in Dataset::ALL {
        let path = common::golden_path(d);
        let rendered = common::render_golden(d);
        if update {
            std::fs::write(&path, &rendered).unwrap();
            continue;
        }
        let golden = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("{}: {e} (set UPDATE_GOLDENS=1 to create it)", path.display()));
        assert_eq!(rendered, golden, "{} is stale", path.display());
    }
}

#[test]
fn goldens_carry_anchor_lines() {
    let read = |d| std::fs::read_to_string(common::golden_path(d)).unwrap();
    assert!(read(Dataset::EsConv).contains("You are the therapist"));
    assert!(read(Dataset::CraigslistBargain).contains("Hi, how much is the"));
    assert!(read(Dataset::P4g).contains("head-quartered in London"));
}

#[test]
fn every_slot_is_filled() {
    for d in Dataset::ALL {
        let text = common::render_golden(d);
        let leftover = nrpa_dialogue::prompts::placeholders(&text);
        assert!(leftover.is_empty(), "{d:?} left {leftover:?} unfilled");
    }
}
