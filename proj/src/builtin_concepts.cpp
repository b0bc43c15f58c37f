#include "cbe/concept_space.hpp"

namespace cbe {

namespace {

// Facial components follow the FISWG feature list; radiology groups follow the
// usual finding families of a chest radiograph report.
std::vector<ConceptGroup> face_groups() {
  return {
      {"skin",
       {
           {"skin.smooth_skin_texture", "smooth skin texture"},
           {"skin.rough_skin_texture", "rough skin texture"},
           {"skin.light_skin_tone", "light skin tone"},
           {"skin.dark_skin_tone", "dark skin tone"},
           {"skin.freckled_skin", "freckled skin"},
           {"skin.ruddy_complexion", "ruddy complexion"},
       }},
      {"face_outline",
       {
           {"face_outline.oval_face_shape", "oval face shape"},
           {"face_outline.round_face_shape", "round face shape"},
           {"face_outline.square_face_shape", "square face shape"},
           {"face_outline.rectangular_face_shape", "rectangular face shape"},
           {"face_outline.triangular_face_shape", "triangular face shape"},
           {"face_outline.heart_shaped_face", "heart-shaped face"},
           {"face_outline.diamond_shaped_face", "diamond-shaped face"},
       }},
      {"face_composition",
       {
           {"face_composition.wide_face", "wide face"},
           {"face_composition.narrow_face", "narrow face"},
           {"face_composition.long_face", "long face"},
           {"face_composition.short_face", "short face"},
           {"face_composition.symmetric_facial_proportions", "symmetric facial proportions"},
           {"face_composition.asymmetric_facial_proportions", "asymmetric facial proportions"},
       }},
      {"hair",
       {
           {"hair.straight_hair", "straight hair"},
           {"hair.wavy_hair", "wavy hair"},
           {"hair.curly_hair", "curly hair"},
           {"hair.bald_head", "bald head"},
           {"hair.receding_hairline", "receding hairline"},
           {"hair.thick_hair", "thick hair"},
           {"hair.widow_s_peak_hairline", "widow's peak hairline"},
       }},
      {"forehead",
       {
           {"forehead.high_forehead", "high forehead"},
           {"forehead.low_forehead", "low forehead"},
           {"forehead.broad_forehead", "broad forehead"},
           {"forehead.narrow_forehead", "narrow forehead"},
           {"forehead.sloping_forehead", "sloping forehead"},
           {"forehead.vertical_forehead", "vertical forehead"},
       }},
      {"eyebrows",
       {
           {"eyebrows.thick_eyebrows", "thick eyebrows"},
           {"eyebrows.thin_eyebrows", "thin eyebrows"},
           {"eyebrows.arched_eyebrows", "arched eyebrows"},
           {"eyebrows.straight_eyebrows", "straight eyebrows"},
           {"eyebrows.bushy_eyebrows", "bushy eyebrows"},
           {"eyebrows.connected_eyebrows", "connected eyebrows"},
           {"eyebrows.widely_spaced_eyebrows", "widely spaced eyebrows"},
       }},
      {"eyes",
       {
           {"eyes.wide_set_eyes", "wide-set eyes"},
           {"eyes.close_set_eyes", "close-set eyes"},
           {"eyes.deep_set_eyes", "deep-set eyes"},
           {"eyes.protruding_eyes", "protruding eyes"},
           {"eyes.hooded_eyelids", "hooded eyelids"},
           {"eyes.upturned_eyes", "upturned eyes"},
           {"eyes.downturned_eyes", "downturned eyes"},
           {"eyes.almond_shaped_eyes", "almond-shaped eyes"},
       }},
      {"cheeks",
       {
           {"cheeks.high_cheekbones", "high cheekbones"},
           {"cheeks.flat_cheekbones", "flat cheekbones"},
           {"cheeks.hollow_cheeks", "hollow cheeks"},
           {"cheeks.full_cheeks", "full cheeks"},
           {"cheeks.dimpled_cheeks", "dimpled cheeks"},
           {"cheeks.prominent_cheekbones", "prominent cheekbones"},
       }},
      {"nose",
       {
           {"nose.wide_nose", "wide nose"},
           {"nose.narrow_nose", "narrow nose"},
           {"nose.long_nose", "long nose"},
           {"nose.short_nose", "short nose"},
           {"nose.straight_nose_bridge", "straight nose bridge"},
           {"nose.convex_nose_bridge", "convex nose bridge"},
           {"nose.concave_nose_bridge", "concave nose bridge"},
           {"nose.upturned_nose_tip", "upturned nose tip"},
           {"nose.bulbous_nose_tip", "bulbous nose tip"},
       }},
      {"ears",
       {
           {"ears.large_ears", "large ears"},
           {"ears.small_ears", "small ears"},
           {"ears.protruding_ears", "protruding ears"},
           {"ears.flat_set_ears", "flat-set ears"},
           {"ears.attached_earlobes", "attached earlobes"},
           {"ears.detached_earlobes", "detached earlobes"},
       }},
      {"mouth",
       {
           {"mouth.thin_lips", "thin lips"},
           {"mouth.full_lips", "full lips"},
           {"mouth.wide_mouth", "wide mouth"},
           {"mouth.narrow_mouth", "narrow mouth"},
           {"mouth.upturned_mouth_corners", "upturned mouth corners"},
           {"mouth.downturned_mouth_corners", "downturned mouth corners"},
           {"mouth.pronounced_cupid_s_bow", "pronounced cupid's bow"},
           {"mouth.short_philtrum", "short philtrum"},
           {"mouth.long_philtrum", "long philtrum"},
       }},
      {"chin",
       {
           {"chin.pointed_chin", "pointed chin"},
           {"chin.square_chin", "square chin"},
           {"chin.round_chin", "round chin"},
           {"chin.cleft_chin", "cleft chin"},
           {"chin.receding_chin", "receding chin"},
           {"chin.protruding_chin", "protruding chin"},
       }},
      {"jawline",
       {
           {"jawline.strong_jawline", "strong jawline"},
           {"jawline.soft_jawline", "soft jawline"},
           {"jawline.wide_jaw", "wide jaw"},
           {"jawline.narrow_jaw", "narrow jaw"},
           {"jawline.angular_jaw", "angular jaw"},
       }},
      {"neck",
       {
           {"neck.long_neck", "long neck"},
           {"neck.short_neck", "short neck"},
           {"neck.thick_neck", "thick neck"},
           {"neck.prominent_adam_s_apple", "prominent adam's apple"},
       }},
      {"facial_hair",
       {
           {"facial_hair.clean_shaven_face", "clean-shaven face"},
           {"facial_hair.full_beard", "full beard"},
           {"facial_hair.goatee", "goatee"},
           {"facial_hair.mustache", "mustache"},
           {"facial_hair.stubble", "stubble"},
           {"facial_hair.sideburns", "sideburns"},
           {"facial_hair.chin_strap_beard", "chin strap beard"},
       }},
      {"facial_lines",
       {
           {"facial_lines.forehead_wrinkles", "forehead wrinkles"},
           {"facial_lines.crow_s_feet", "crow's feet"},
           {"facial_lines.nasolabial_folds", "nasolabial folds"},
           {"facial_lines.frown_lines_between_the_eyebrows", "frown lines between the eyebrows"},
           {"facial_lines.unlined_skin", "unlined skin"},
           {"facial_lines.marionette_lines", "marionette lines"},
       }},
      {"scars",
       {
           {"scars.no_visible_scars", "no visible scars"},
           {"scars.scar_on_the_forehead", "scar on the forehead"},
           {"scars.scar_on_the_cheek", "scar on the cheek"},
           {"scars.scar_on_the_chin", "scar on the chin"},
       }},
      {"facial_marks",
       {
           {"facial_marks.mole_on_the_cheek", "mole on the cheek"},
           {"facial_marks.mole_above_the_lip", "mole above the lip"},
           {"facial_marks.birthmark", "birthmark"},
           {"facial_marks.freckles_across_the_nose", "freckles across the nose"},
           {"facial_marks.acne_marks", "acne marks"},
           {"facial_marks.no_facial_marks", "no facial marks"},
       }},
      {"alterations",
       {
           {"alterations.facial_tattoo", "facial tattoo"},
           {"alterations.eyebrow_piercing", "eyebrow piercing"},
           {"alterations.nose_piercing", "nose piercing"},
           {"alterations.lip_piercing", "lip piercing"},
           {"alterations.no_facial_piercings", "no facial piercings"},
       }},
  };
}

std::vector<ConceptGroup> xray_groups() {
  return {
      {"pleura",
       {
           {"pleura.pleural_effusion", "pleural effusion"},
           {"pleura.blunting_of_the_costophrenic_angle", "blunting of the costophrenic angle"},
           {"pleura.pleural_thickening", "pleural thickening"},
           {"pleura.pneumothorax", "pneumothorax"},
           {"pleura.no_pleural_abnormality", "no pleural abnormality"},
       }},
      {"lungs",
       {
           {"lungs.consolidation", "consolidation"},
           {"lungs.atelectasis", "atelectasis"},
           {"lungs.pulmonary_edema", "pulmonary edema"},
           {"lungs.interstitial_opacities", "interstitial opacities"},
           {"lungs.nodular_opacity", "nodular opacity"},
           {"lungs.clear_lungs", "clear lungs"},
       }},
      {"heart",
       {
           {"heart.cardiomegaly", "cardiomegaly"},
           {"heart.enlarged_cardiac_silhouette", "enlarged cardiac silhouette"},
           {"heart.normal_heart_size", "normal heart size"},
       }},
      {"mediastinum",
       {
           {"mediastinum.widened_mediastinum", "widened mediastinum"},
           {"mediastinum.tracheal_deviation", "tracheal deviation"},
           {"mediastinum.normal_mediastinal_contours", "normal mediastinal contours"},
       }},
      {"diaphragm",
       {
           {"diaphragm.elevated_hemidiaphragm", "elevated hemidiaphragm"},
           {"diaphragm.flattened_diaphragm", "flattened diaphragm"},
           {"diaphragm.normal_diaphragm", "normal diaphragm"},
       }},
      {"devices",
       {
           {"devices.endotracheal_tube", "endotracheal tube"},
           {"devices.central_venous_catheter", "central venous catheter"},
           {"devices.pacemaker_leads", "pacemaker leads"},
           {"devices.nasogastric_tube", "nasogastric tube"},
           {"devices.no_support_devices", "no support devices"},
       }},
      {"bones",
       {
           {"bones.rib_fracture", "rib fracture"},
           {"bones.degenerative_changes_of_the_spine", "degenerative changes of the spine"},
           {"bones.intact_osseous_structures", "intact osseous structures"},
       }},
      {"vasculature",
       {
           {"vasculature.pulmonary_vascular_congestion", "pulmonary vascular congestion"},
           {"vasculature.normal_pulmonary_vasculature", "normal pulmonary vasculature"},
       }},
  };
}

}  // namespace

ConceptSet builtin_concepts(Domain domain) {
  return ConceptSet(domain == Domain::face ? face_groups() : xray_groups());
}

}  // namespace cbe
