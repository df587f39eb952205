use super::*;

fn count(glyphs: &[u8], g: Glyph) -> usize {
    glyphs.iter().filter(|&&x| x == g.id()).count()
}

#[test]
fn same_seed_gives_identical_state() {
    let cfg = RoomConfig::new(MapKind::Ultimate);
    let (a, oa) = EnvState::reset(&cfg, 42).unwrap();
    let (b, ob) = EnvState::reset(&cfg, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(oa, ob);
    let (c, _) = EnvState::reset(&cfg, 43).unwrap();
    assert_ne!(a, c);
}

#[test]
fn random_map_has_no_entities() {
    let (s, _) = EnvState::reset(&RoomConfig::new(MapKind::Random), 1).unwrap();
    assert!(s.monsters.is_empty());
    assert!(s.traps.is_empty());
    assert_ne!(s.start, s.goal);
    assert_eq!(s.agent_pos, s.start);
}

#[test]
fn wall_bump_costs_a_step() {
    let cfg = RoomConfig::new(MapKind::Random);
    let (mut s, _) = EnvState::reset(&cfg, 5).unwrap();
    // Park the agent against the north wall, away from the goal.
    s.agent_pos = (3, 32);
    s.goal = (17, 46);
    let r = s.step(0).unwrap();
    assert_eq!(s.agent_pos, (3, 32));
    assert_eq!(r.reward, -0.001);
    assert!(!r.done);
}

#[test]
fn reaching_goal_nets_penalty() {
    let cfg = RoomConfig::new(MapKind::Random);
    let (mut s, _) = EnvState::reset(&cfg, 9).unwrap();
    let goal = s.goal;
    // Put the agent just west of the goal if possible, else east.
    s.agent_pos = if goal.1 > 32 { (goal.0, goal.1 - 1) } else { (goal.0, goal.1 + 1) };
    let action = if goal.1 > 32 { 1 } else { 3 };
    let r = s.step(action).unwrap();
    assert!((r.reward - 0.999).abs() < 1e-12);
    assert!(r.done && r.info.reached_goal);
    assert!(s.step(0).is_err(), "stepping after done must fail");
}

#[test]
fn invalid_action_is_rejected() {
    let (mut s, _) = EnvState::reset(&RoomConfig::new(MapKind::Random), 1).unwrap();
    assert!(s.step(4).is_err());
    let mut cfg8 = RoomConfig::new(MapKind::Random);
    cfg8.action_set = ActionSet::Cardinal8;
    let (mut s8, _) = EnvState::reset(&cfg8, 1).unwrap();
    assert!(s8.step(7).is_ok());
    assert!(s8.step(8).is_err());
}

#[test]
fn monster_chases_in_a_straight_line() {
    let cfg = RoomConfig::new(MapKind::Monster);
    let (mut s, _) = EnvState::reset(&cfg, 3).unwrap();
    s.agent_pos = (10, 38);
    s.monsters = vec![Monster { pos: (10, 41), alive: true }];
    s.monster_phase();
    assert_eq!(s.monsters[0].pos, (10, 40));
}

#[test]
fn monster_phase_without_monsters_is_a_no_op() {
    let (mut s, _) = EnvState::reset(&RoomConfig::new(MapKind::Random), 8).unwrap();
    let before = s.clone();
    assert!(!s.monster_phase());
    assert_eq!(s, before);
}

#[test]
fn moving_into_a_monster_kills_it() {
    let cfg = RoomConfig::new(MapKind::Monster);
    let (mut s, _) = EnvState::reset(&cfg, 4).unwrap();
    s.agent_pos = (10, 38);
    s.goal = (17, 46);
    s.monsters = vec![Monster { pos: (10, 39), alive: true }];
    s.step(1).unwrap();
    assert_eq!(s.agent_pos, (10, 38));
    assert!(!s.monsters[0].alive);
    assert_eq!(s.glyph_at((10, 39)), Glyph::Corpse);
}

#[test]
fn crop_at_corner() {
    let (mut s, _) = EnvState::reset(&RoomConfig::new(MapKind::Random), 2).unwrap();
    s.agent_pos = (3, 32);
    let crop = s.crop(3);
    assert_eq!(crop[4], Glyph::Agent.id());
    assert_eq!(count(&crop, Glyph::Wall) + count(&crop, Glyph::Pad), 5);
}

#[test]
fn crop_center_is_agent_and_pads_off_canvas() {
    let mut cfg = RoomConfig::new(MapKind::Random);
    cfg.crop_size = 9;
    let (mut s, _) = EnvState::reset(&cfg, 2).unwrap();
    s.agent_pos = (3, 40);
    let crop = s.crop(9);
    assert_eq!(crop[40], Glyph::Agent.id());
    // Row 3 - 4 = -1 is off the canvas.
    assert!(crop[..9].iter().all(|&g| g == Glyph::Pad.id()));
}

#[test]
fn lit_map_has_no_unseen_glyphs() {
    let mut cfg = RoomConfig::new(MapKind::Trap);
    cfg.full_map = true;
    let (s, obs) = EnvState::reset(&cfg, 6).unwrap();
    let full = obs.full_map.unwrap();
    assert_eq!(count(&full, Glyph::Unseen), 0);
    // Hidden traps render as floor.
    assert_eq!(count(&full, Glyph::TrapRevealed), 0);
    for t in &s.traps {
        assert_eq!(s.glyph_at(t.pos), Glyph::Floor);
    }
}

#[test]
fn unlit_reset_reveals_only_the_agent_neighbourhood() {
    let mut cfg = RoomConfig::new(MapKind::Ultimate);
    cfg.full_map = true;
    for seed in 0..50 {
        let (s, obs) = EnvState::reset(&cfg, seed).unwrap();
        let full = obs.full_map.unwrap();
        let cols = cfg.canvas_cols;
        let (ar, ac) = s.agent_pos;
        for (i, &g) in full.iter().enumerate() {
            let (r, c) = (i / cols, i % cols);
            let near = r.abs_diff(ar) <= 1 && c.abs_diff(ac) <= 1;
            assert_eq!(g != Glyph::Unseen.id(), near, "seed {seed} cell {r},{c}");
        }
    }
}

#[test]
fn room_position_labels() {
    let (mut s, _) = EnvState::reset(&RoomConfig::new(MapKind::Random), 0).unwrap();
    s.agent_pos = (3, 32);
    assert_eq!(s.room_position(), (0, 0));
    s.agent_pos = (17, 46);
    assert_eq!(s.room_position(), (14, 14));
    s.agent_pos = (10, 40);
    assert_eq!(s.room_position(), (8, 7));
}

#[test]
fn text_render_uses_documented_characters() {
    let (s, _) = EnvState::reset(&RoomConfig::new(MapKind::Random), 0).unwrap();
    let text = s.render_text();
    assert_eq!(text.lines().count(), 21);
    assert!(text.lines().all(|l| l.chars().count() == 79));
    assert_eq!(text.matches('@').count(), 1);
    assert_eq!(text.matches('>').count(), 1);
}

#[test]
fn validation_rejects_overfull_rooms() {
    let mut cfg = RoomConfig::new(MapKind::Ultimate);
    cfg.interior = 4;
    cfg.n_traps = 15;
    assert!(EnvState::reset(&cfg, 0).is_err());
    let mut bad_crop = RoomConfig::new(MapKind::Random);
    bad_crop.crop_size = 4;
    assert!(bad_crop.validate().is_err());
}
