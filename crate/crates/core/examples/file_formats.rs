//! Round-trip a clip through TVF, its features through FVF and a model
//! through SNW.

use stressnet::emission::preprocess;
use stressnet::io::{decode_fvf, decode_snw, decode_tvf, encode_fvf, encode_snw, encode_tvf, SavedModel};
use stressnet::neural::{predict_isti, ArchDescriptor, Model};
use stressnet::synth::{gen_thermal, CardiacProfile, EmissionProfile};

fn main() -> stressnet::Result<()> {
    let (clip, _) = gen_thermal(&EmissionProfile::face(16, 16, 15.0, 2), &CardiacProfile::constant(6.0, 160.0, 2))?;
    let tvf = encode_tvf(&clip)?;
    assert_eq!(encode_tvf(&decode_tvf(&tvf)?)?, tvf);
    println!("TVF: {} bytes, byte-exact round trip", tvf.len());

    let fc = preprocess(&clip, &Default::default())?;
    let fvf = encode_fvf(&fc)?;
    assert_eq!(encode_fvf(&decode_fvf(&fvf)?)?, fvf);
    println!("FVF: {} bytes, byte-exact round trip", fvf.len());

    let arch = ArchDescriptor { input_h: 16, input_w: 16, ..Default::default() };
    let model = Model::init(arch.clone(), 9)?;
    let snw = encode_snw(model.params(), &arch.to_text())?;
    let SavedModel::Isti(back) = decode_snw(&snw)?.into_model()? else {
        unreachable!("descriptor says isti")
    };
    let a = predict_isti(&model, &fc, 300.0, 1.0)?;
    let b = predict_isti(&back, &fc, 300.0, 1.0)?;
    let worst = a.samples().iter().zip(b.samples()).map(|(x, y)| ((x - y) / x).abs()).fold(0.0, f64::max);
    println!("SNW: {} bytes, prediction drift after f32 storage {worst:.2e} relative", snw.len());
    Ok(())
}
