//! Regenerates the bundled hand and object fixtures under `assets/`.
//!
//! Run from the workspace root:
//!
//! ```text
//! cargo run -p funcgrasp --example author_fixtures
//! ```
//!
//! The hands are simplified capsule/sphere/box models; the objects are
//! surfaces of revolution whose parts are selected geometrically from the
//! deterministic surface sample.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;

use funcgrasp::affordance::{Annotation, DEFAULT_SURFACE_POINTS};
use funcgrasp::geometry::io::{load_mesh, write_obj};
use funcgrasp::geometry::{revolve_profile, sample_primitive_surface, sample_surface_points, ConvexPrimitive, Vec3};
use funcgrasp::hand::{
    AnchorSpec, AnchorsSpec, AxesSpec, HandFile, JointSpec, LinkSpec, Part, PoseSpec, PrimitiveSpec, ThumbAxisSpec,
};
use funcgrasp::rng::rng_from_seed;

/// Target spacing of hand surface samples (m).
const SPACING: f64 = 0.006;
const IDENTITY: [f64; 4] = [1.0, 0.0, 0.0, 0.0];

fn main() -> funcgrasp::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let hands = root.join("assets/hands");
    let objects = root.join("assets/objects");
    fs::create_dir_all(&hands)?;
    fs::create_dir_all(&objects)?;

    for (file, five) in [("four_finger_16dof.json", false), ("five_finger_22dof.json", true)] {
        let hand = build_hand(five);
        let text = serde_json::to_string_pretty(&hand)?;
        let model = hand.into_model()?;
        println!("{file}: {} joints, {} surface points", model.n_joints(), model.total_surface_points());
        fs::write(hands.join(file), text + "\n")?;
    }

    write_object(
        &objects,
        "cylinder",
        "cylinder",
        &[(0.0, -0.1), (0.03, -0.1), (0.03, -0.05), (0.03, 0.0), (0.03, 0.05), (0.03, 0.1), (0.0, 0.1)],
        11,
        |p, n| side(n) && p.z > 0.055 && p.z < 0.085 && azimuth(p).abs() < 0.35,
        |p, n| side(n) && p.z > -0.08 && p.z < 0.03 && azimuth(p).abs() < 1.2,
    )?;
    write_object(
        &objects,
        "spray_bottle",
        "spray_bottle",
        &[
            (0.0, -0.11),
            (0.032, -0.11),
            (0.032, -0.06),
            (0.032, -0.01),
            (0.032, 0.03),
            (0.022, 0.047),
            (0.014, 0.055),
            (0.014, 0.075),
            (0.02, 0.075),
            (0.02, 0.11),
            (0.0, 0.11),
        ],
        12,
        |p, n| side(n) && p.z > 0.08 && p.z < 0.105 && azimuth(p).abs() < 0.5,
        |p, n| side(n) && p.z > -0.09 && p.z < 0.02 && azimuth(p).abs() < 1.2,
    )?;
    Ok(())
}

fn side(n: &Vec3) -> bool {
    n.z.abs() < 1e-6
}

fn azimuth(p: &Vec3) -> f64 {
    p.y.atan2(p.x)
}

fn write_object(
    dir: &Path,
    name: &str,
    category: &str,
    profile: &[(f64, f64)],
    seed: u64,
    functional: impl Fn(&Vec3, &Vec3) -> bool,
    grasping: impl Fn(&Vec3, &Vec3) -> bool,
) -> funcgrasp::Result<()> {
    let mesh = revolve_profile(profile, 48)?;
    let path = dir.join(format!("{name}.obj"));
    write_obj(fs::File::create(&path)?, mesh.vertices(), mesh.triangles())?;
    // select parts on the cloud the loader will reproduce
    let mesh = load_mesh(&path)?;
    let cloud = sample_surface_points(&mesh, DEFAULT_SURFACE_POINTS, seed)?;
    let normals = cloud.normals.as_ref().expect("sampled normals");
    let pick = |f: &dyn Fn(&Vec3, &Vec3) -> bool| -> Vec<usize> {
        (0..cloud.len()).filter(|&i| f(&cloud.points[i], &normals[i])).collect()
    };
    let ann = Annotation {
        id: Some(name.into()),
        category: category.into(),
        seed,
        n_points: DEFAULT_SURFACE_POINTS,
        native_scale: None,
        functional_indices: pick(&functional),
        grasping_indices: pick(&grasping),
        labels: None,
        axes: None,
    };
    println!(
        "{name}: {} functional, {} grasping points",
        ann.functional_indices.len(),
        ann.grasping_indices.len()
    );
    fs::write(dir.join(format!("{name}.json")), serde_json::to_string(&ann)? + "\n")?;
    Ok(())
}

fn quat_z(angle: f64) -> [f64; 4] {
    [(angle / 2.0).cos(), 0.0, 0.0, (angle / 2.0).sin()]
}

fn pose(t: [f64; 3], rotation: [f64; 4]) -> PoseSpec {
    PoseSpec { translation: t, rotation }
}

fn joint(name: &str, parent: &str, child: &str, axis: [f64; 3], origin: PoseSpec, limits: [f64; 2], flexion: bool) -> JointSpec {
    JointSpec {
        name: name.into(),
        parent: parent.into(),
        child: child.into(),
        axis,
        origin,
        limits,
        flexion,
    }
}

fn sphere(r: f64) -> PrimitiveSpec {
    PrimitiveSpec::Sphere { center: [0.0; 3], radius: r }
}

fn capsule(y0: f64, y1: f64, r: f64) -> PrimitiveSpec {
    PrimitiveSpec::Capsule {
        a: [0.0, y0, 0.0],
        b: [0.0, y1, 0.0],
        radius: r,
    }
}

fn anchor(link: &str, point: [f64; 3]) -> AnchorSpec {
    AnchorSpec { link: link.into(), point }
}

/// Surface samples for one link at roughly [`SPACING`], dropping samples
/// buried inside the link's other primitives.
fn link_points(name: &str, prims: &[PrimitiveSpec]) -> Vec<[f64; 3]> {
    let prims: Vec<ConvexPrimitive> = prims
        .iter()
        .map(|p| match p {
            PrimitiveSpec::Sphere { center, radius } => ConvexPrimitive::sphere(Vec3::from(*center), *radius),
            PrimitiveSpec::Capsule { a, b, radius } => ConvexPrimitive::capsule(Vec3::from(*a), Vec3::from(*b), *radius),
            PrimitiveSpec::Box { center, half_extents, .. } => ConvexPrimitive::cuboid(
                Vec3::from(*half_extents),
                nalgebra::Isometry3::translation(center[0], center[1], center[2]),
            ),
        })
        .collect::<Result<_, _>>()
        .expect("valid primitives");
    let seed = name.bytes().fold(17u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::new();
    for (k, prim) in prims.iter().enumerate() {
        let n = ((prim.surface_area() / (SPACING * SPACING)).round() as usize).max(8);
        for p in sample_primitive_surface(prim, n, &mut rng) {
            let buried = prims
                .iter()
                .enumerate()
                .any(|(j, q)| j != k && q.signed_distance(&p) < -1e-9);
            if !buried {
                out.push([round(p.x), round(p.y), round(p.z)]);
            }
        }
    }
    out
}

fn round(v: f64) -> f64 {
    (v * 1e7).round() / 1e7
}

struct Builder {
    links: Vec<LinkSpec>,
    joints: Vec<JointSpec>,
}

impl Builder {
    fn link(&mut self, name: &str, part: Part, prims: Vec<PrimitiveSpec>) {
        let surface_points = link_points(name, &prims);
        self.links.push(LinkSpec {
            name: name.into(),
            part,
            primitives: prims,
            surface_points,
        });
    }

    /// A finger with an abduction joint at the knuckle and three flexion
    /// joints; `extra` inserts a twist joint before abduction.
    fn finger(&mut self, part: Part, x: f64, extra: bool) {
        let f = part.name();
        let base = [x, 0.062, 0.0];
        let mut parent = "palm".to_string();
        if extra {
            let hub = format!("{f}_hub");
            self.link(&hub, part, vec![sphere(0.0085)]);
            self.joints.push(joint(&format!("{f}_twist"), &parent, &hub, [0.0, 1.0, 0.0], pose(base, IDENTITY), [-0.3, 0.3], false));
            parent = hub;
        }
        let knuckle = format!("{f}_knuckle");
        self.link(&knuckle, part, vec![sphere(0.0085)]);
        let origin = if extra { [0.0; 3] } else { base };
        self.joints.push(joint(&format!("{f}_abd"), &parent, &knuckle, [0.0, 0.0, 1.0], pose(origin, IDENTITY), [-0.25, 0.25], false));
        let prox = format!("{f}_proximal");
        self.link(&prox, part, vec![capsule(0.008, 0.045, 0.0085)]);
        self.joints.push(joint(&format!("{f}_mcp"), &knuckle, &prox, [1.0, 0.0, 0.0], pose([0.0; 3], IDENTITY), [-0.2, 1.6], true));
        let mid = format!("{f}_middle");
        self.link(&mid, part, vec![capsule(0.0, 0.03, 0.008)]);
        self.joints.push(joint(&format!("{f}_pip"), &prox, &mid, [1.0, 0.0, 0.0], pose([0.0, 0.045, 0.0], IDENTITY), [0.0, 1.7], true));
        let dist = format!("{f}_distal");
        self.link(&dist, part, vec![capsule(0.0, 0.02, 0.0075)]);
        self.joints.push(joint(&format!("{f}_dip"), &mid, &dist, [1.0, 0.0, 0.0], pose([0.0, 0.03, 0.0], IDENTITY), [0.0, 1.5], true));
    }

    fn thumb(&mut self, twist: bool) {
        // rest direction of the thumb in the palm plane, up and outwards
        let spread = FRAC_PI_2 - 0.6;
        let base = pose([0.058, -0.025, 0.0], quat_z(-spread));
        self.link("thumb_base", Part::Thumb, vec![sphere(0.0095)]);
        self.joints.push(joint("thumb_abd", "palm", "thumb_base", [0.0, 0.0, 1.0], base, [-0.3, 0.6], false));
        let mut parent = "thumb_base";
        if twist {
            self.link("thumb_hub", Part::Thumb, vec![sphere(0.009)]);
            self.joints.push(joint("thumb_twist", "thumb_base", "thumb_hub", [0.0, 1.0, 0.0], pose([0.0; 3], IDENTITY), [-0.5, 0.5], false));
            parent = "thumb_hub";
        }
        self.link("thumb_proximal", Part::Thumb, vec![capsule(0.008, 0.04, 0.0095)]);
        self.joints.push(joint("thumb_flex", parent, "thumb_proximal", [1.0, 0.0, 0.0], pose([0.0; 3], IDENTITY), [-0.2, 1.3], true));
        self.link("thumb_middle", Part::Thumb, vec![capsule(0.0, 0.03, 0.009)]);
        self.joints.push(joint("thumb_mcp", "thumb_proximal", "thumb_middle", [1.0, 0.0, 0.0], pose([0.0, 0.04, 0.0], IDENTITY), [0.0, 1.2], true));
        self.link("thumb_distal", Part::Thumb, vec![capsule(0.0, 0.022, 0.008)]);
        self.joints.push(joint("thumb_ip", "thumb_middle", "thumb_distal", [1.0, 0.0, 0.0], pose([0.0, 0.03, 0.0], IDENTITY), [0.0, 1.4], true));
    }
}

fn build_hand(five: bool) -> HandFile {
    let mut b = Builder {
        links: Vec::new(),
        joints: Vec::new(),
    };
    b.link(
        "palm",
        Part::Palm,
        vec![PrimitiveSpec::Box {
            center: [0.0; 3],
            rotation: IDENTITY,
            half_extents: [0.045, 0.05, 0.01],
        }],
    );
    let fingers: Vec<(Part, f64)> = if five {
        vec![(Part::Index, 0.033), (Part::Middle, 0.011), (Part::Ring, -0.011), (Part::Little, -0.033)]
    } else {
        vec![(Part::Index, 0.027), (Part::Middle, 0.0), (Part::Ring, -0.027)]
    };
    b.thumb(five);
    for &(part, x) in &fingers {
        b.finger(part, x, five && part == Part::Little);
    }

    let pad = |link: &str, r: f64| -> Vec<AnchorSpec> {
        [0.006, 0.012, 0.018].iter().map(|&y| anchor(link, [0.0, y, r])).collect()
    };
    let mut functional = BTreeMap::new();
    functional.insert(Part::Thumb, pad("thumb_distal", 0.008));
    let mut press = BTreeMap::new();
    for &(part, _) in &fingers {
        functional.insert(part, pad(&format!("{}_distal", part.name()), 0.0075));
        press.insert(part, [0.0, 0.0, 1.0]);
    }

    let mut grasping = vec![
        anchor("palm", [0.025, 0.025, 0.01]),
        anchor("palm", [-0.025, 0.025, 0.01]),
        anchor("palm", [0.0, 0.0, 0.01]),
        anchor("palm", [0.025, -0.025, 0.01]),
        anchor("palm", [-0.025, -0.025, 0.01]),
        anchor("thumb_distal", [0.0, 0.011, 0.008]),
    ];
    for &(part, _) in &fingers {
        if part != Part::Index {
            let f = part.name();
            grasping.push(anchor(&format!("{f}_proximal"), [0.0, 0.025, 0.0085]));
            grasping.push(anchor(&format!("{f}_middle"), [0.0, 0.015, 0.008]));
        }
    }

    let spread = FRAC_PI_2 - 0.6;
    let along = [spread.sin(), spread.cos(), 0.0];
    let outward = [-spread.cos(), spread.sin(), 0.0];
    let thumb_gf = vec![
        ThumbAxisSpec {
            name: "tip_press".into(),
            link: "thumb_distal".into(),
            point: [0.0, 0.03, 0.0],
            press: along,
        },
        ThumbAxisSpec {
            name: "pad_press".into(),
            link: "thumb_distal".into(),
            point: [0.0, 0.012, 0.008],
            press: [0.0, 0.0, 1.0],
        },
        ThumbAxisSpec {
            name: "lateral".into(),
            link: "thumb_distal".into(),
            point: [-0.008, 0.012, 0.0],
            press: outward,
        },
    ];

    HandFile {
        name: if five { "five_finger_22dof" } else { "four_finger_16dof" }.into(),
        links: b.links,
        joints: b.joints,
        anchors: AnchorsSpec { functional, grasping },
        grasp_center: Some([0.0, 0.01, 0.03]),
        axes: AxesSpec { press, thumb_gf },
    }
}
