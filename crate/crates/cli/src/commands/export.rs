use std::io::{BufWriter, Write};
use std::path::PathBuf;

use funcgrasp::dataset::read_record_file;
use funcgrasp::geometry::io::write_ply;
use funcgrasp::hand::PosedHand;
use funcgrasp::{AffordanceObject, GraspConfiguration, HandModel, Vec3};

use super::{find_object, open_hand};
use crate::{CliError, CliResult, ExportArgs};

pub const FUNCTIONAL_COLOR: [u8; 3] = [220, 40, 40];
pub const GRASPING_COLOR: [u8; 3] = [40, 90, 220];
pub const BOTH_COLOR: [u8; 3] = [200, 40, 200];
pub const PLAIN_COLOR: [u8; 3] = [170, 170, 170];
pub const HAND_COLOR: [u8; 3] = [230, 190, 160];

const SEGMENTS: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExportedFiles {
    /// Object mesh.
    pub object: PathBuf,
    /// Object surface samples coloured by part.
    pub parts: PathBuf,
    /// Posed hand primitives.
    pub hand: PathBuf,
}

/// Colour per surface sample: functional, grasping, both or neither.
pub fn part_colors(obj: &AffordanceObject) -> Vec<[u8; 3]> {
    let mut colors = vec![PLAIN_COLOR; obj.surface.len()];
    for &i in &obj.functional {
        colors[i] = FUNCTIONAL_COLOR;
    }
    for &i in &obj.grasping {
        colors[i] = if colors[i] == FUNCTIONAL_COLOR { BOTH_COLOR } else { GRASPING_COLOR };
    }
    colors
}

/// Every collision primitive of the posed hand, tessellated into one mesh.
pub fn hand_mesh(hand: &HandModel, config: &GraspConfiguration) -> CliResult<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let posed = PosedHand::new(hand, config)?;
    let mut verts = Vec::new();
    let mut tris = Vec::new();
    for link in 0..hand.links.len() {
        for prim in posed.link_primitives(link) {
            let (v, t) = prim.tessellate(SEGMENTS);
            let base = verts.len();
            verts.extend(v);
            tris.extend(t.into_iter().map(|[a, b, c]| [a + base, b + base, c + base]));
        }
    }
    Ok((verts, tris))
}

fn create(path: &PathBuf) -> CliResult<BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn export(args: &ExportArgs, out: &mut dyn Write) -> CliResult<ExportedFiles> {
    let file = read_record_file(&args.records, false)?;
    let record = file.records.get(args.index).ok_or_else(|| {
        CliError::Input(format!(
            "index {} is out of range: {} holds {} records",
            args.index,
            args.records.display(),
            file.records.len()
        ))
    })?;
    let hand = open_hand(&args.hand)?;
    if record.hand_id != hand.name {
        return Err(CliError::Input(format!(
            "record is for hand {:?}, not {:?}",
            record.hand_id, hand.name
        )));
    }
    let obj = find_object(&args.objects, &record.object_id)?.rescaled(record.scale)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let files = ExportedFiles {
        object: args.out_dir.join("object.ply"),
        parts: args.out_dir.join("object_parts.ply"),
        hand: args.out_dir.join("hand.ply"),
    };

    let mesh = &obj.mesh;
    let plain = vec![PLAIN_COLOR; mesh.vertices().len()];
    let mut w = create(&files.object)?;
    write_ply(&mut w, mesh.vertices(), Some(&plain), mesh.triangles())?;
    w.flush()?;

    let mut w = create(&files.parts)?;
    write_ply(&mut w, &obj.surface.points, Some(&part_colors(&obj)), &[])?;
    w.flush()?;

    let (verts, tris) = hand_mesh(&hand, &record.config)?;
    let skin = vec![HAND_COLOR; verts.len()];
    let mut w = create(&files.hand)?;
    write_ply(&mut w, &verts, Some(&skin), &tris)?;
    w.flush()?;

    writeln!(
        out,
        "exported record {} ({} at scale {:.4}) to {}",
        args.index,
        record.object_id,
        record.scale,
        args.out_dir.display()
    )?;
    Ok(files)
}
