#include <stdexcept>

#include "refaudit/response_source.hpp"

namespace refaudit {

namespace {

// Reply bodies are written in a librarian register and kept identity-blind:
// no salutation (the generators prepend one), no patron name, no gendered
// address. [a|b] groups provide the per-response lexical variation.

const char* const kSubjectReplies[] = {
    "Thank you for [reaching out to|contacting] the reference desk. Our special "
    "collections include [extensive|substantial] holdings on that topic, and I "
    "have [gathered|pulled] a short list of articles that should make a "
    "[good|strong] starting point. Because of copyright rules we can supply "
    "scans of up to two chapters or articles per request, and I can place the "
    "rest on hold for you in the reading room. If you [need|want] more depth, "
    "the subject librarian can arrange a consultation.\n\n"
    "[Best wishes|Kind regards|All the best],\n"
    "[The Reference Desk|The Library Team]",

    "Happy to help with your research question. I [searched|checked] our "
    "article databases and the institutional repository and found several "
    "promising items, which I will attach as scans where licensing "
    "[allows|permits]. For older material, the print indexes in the reading "
    "room often [surface|turn up] pieces the databases miss. Let me know "
    "whether you prefer digital copies or photocopies by mail, and I can also "
    "[set up|arrange] an interlibrary loan for anything we do not hold.\n\n"
    "[Best wishes|Kind regards|All the best],\n"
    "[The Reference Desk|The Library Team]",

    "Thanks for writing to the library. The collection you are asking about is "
    "one of our [strongest|deepest] areas, and the finding aid lists "
    "correspondence, photographs, and press clippings that might suit your "
    "project. I have copied the most cited articles to a shared folder and "
    "[flagged|marked] two dissertations worth skimming. Copies beyond fair use "
    "require a small reproduction fee, and turnaround is usually [three|five] "
    "business days.\n\n"
    "[Best wishes|Kind regards|All the best],\n"
    "[The Reference Desk|The Library Team]",
};

const char* const kSportsReplies[] = {
    "What a [fun|great] question about campus history. The university archives "
    "keep a file of clippings on the team name, and the earliest mention "
    "appears in a student newspaper from the [twenties|thirties]. A centennial "
    "history of the athletics program [traces|follows] the nickname's origin "
    "in chapter two, and we hold two copies in the stacks. I can scan the "
    "relevant pages or place the book on the hold shelf, whichever is easier "
    "for you.\n\n"
    "[Best wishes|Kind regards|All the best],\n"
    "[The Reference Desk|The Library Team]",

    "Thanks for asking about the history of the team name. Our local history "
    "room has a [detailed|thorough] monograph on campus athletics, plus oral "
    "histories from former coaches that touch on the mascot story. The alumni "
    "magazine ran a [retrospective|feature] on the topic a few years back, "
    "which is digitized and easy to email. If you would like, I can also point "
    "you to the yearbook volumes where the nickname first [appears|shows up].\n\n"
    "[Best wishes|Kind regards|All the best],\n"
    "[The Reference Desk|The Library Team]",

    "The story behind the team name is a [popular|frequent] reference "
    "question. The short version involves a sportswriter's column and a "
    "student vote, and the fuller account is in a university press book that "
    "we can [lend|circulate] or scan in part. The athletics department's "
    "commemorative program from the stadium dedication also [covers|recounts] "
    "the episode with photographs. Stop by the archives desk and we can pull "
    "both for you.\n\n"
    "[Best wishes|Kind regards|All the best],\n"
    "[The Reference Desk|The Library Team]",
};

const char* const kPopulationReplies[] = {
    "Good news: historical population figures are easy to [verify|confirm]. "
    "For the earlier year, the decennial census volumes in our government "
    "documents collection give a city-level count, and the statistical "
    "abstract provides an intercensal [estimate|figure]. For the later year, "
    "the planning department's annual report is the most reliable source. I "
    "have noted both numbers on the attached sheet along with full citations "
    "so you can quote them [directly|confidently].\n\n"
    "[Best wishes|Kind regards|All the best],\n"
    "[The Reference Desk|The Library Team]",

    "Thanks for the question. City population counts for those years come "
    "from the federal census and the state demographic unit, and our "
    "reference shelf has both series in print. The [numbers|figures] differ "
    "slightly between sources because of boundary changes, so I included a "
    "short note explaining the discrepancy. If you need a table covering "
    "additional years, the data librarian can [export|compile] one from the "
    "archive.\n\n"
    "[Best wishes|Kind regards|All the best],\n"
    "[The Reference Desk|The Library Team]",

    "We get this request [often|regularly], and the documents collection "
    "covers it well. I checked the census gazetteer for the first year and "
    "the county almanac for the second, and photocopied the relevant pages "
    "for you. Mind that annexations changed the city limits between those "
    "dates, so comparisons need a [caveat|footnote]. The full volumes are "
    "available at the reference desk whenever you want to [browse|consult] "
    "them.\n\n"
    "[Best wishes|Kind regards|All the best],\n"
    "[The Reference Desk|The Library Team]",
};

const char* const kPrintSignScanReplies[] = {
    "Printing and scanning at the library is [straightforward|simple], and "
    "staff at the technology desk can walk you through it in person too. Open "
    "your email on one of our public computers, download the form, and send "
    "it to the printer with your card number. After signing, use the flatbed "
    "scanner beside the copy center; it saves a PDF to a USB drive or emails "
    "it [directly|straight] to you. Attach that file to your reply message, "
    "double-check the recipient address, and you are done. A phone photo also "
    "works if the page is flat and the lighting is [even|good].\n\n"
    "[Best wishes|Kind regards|All the best],\n"
    "[The Reference Desk|The Library Team]",

    "Happy to walk you through the steps. First print the form from your "
    "email at any public workstation; printouts cost a dime per page and the "
    "printer sits next to the information desk. Sign the paper with a dark "
    "pen, then either scan it on the multifunction copier or take a clear "
    "photo with your phone from [directly|straight] above. Rename the file so "
    "you can find it, attach it to a new reply in your email, and hit send. "
    "Our volunteers run a [weekly|drop-in] tech help hour if you would like "
    "hands-on practice.\n\n"
    "[Best wishes|Kind regards|All the best],\n"
    "[The Reference Desk|The Library Team]",

    "No [worries|problem] at all; this is one of the most common requests we "
    "get. Bring your library card, log into a computer, and print the form "
    "from your email. After you sign it, the self-service scanner by the "
    "windows turns the page into a PDF in a few [seconds|moments]; choose the "
    "email option and send the scan to yourself. Back at the computer, open "
    "your mailbox, reply to the original message, click the paperclip icon to "
    "attach the scanned file, and review before sending. Ask any staff member "
    "if a step looks [confusing|unfamiliar].\n\n"
    "[Best wishes|Kind regards|All the best],\n"
    "[The Reference Desk|The Library Team]",
};

const char* const kResumeUploadReplies[] = {
    "Congratulations on the application, and yes, uploading a resume is "
    "[manageable|easy] once you see the pattern. Most job sites expect a PDF "
    "or a word-processor document; PDF is usually [safest|best] because the "
    "layout never shifts. Save your file with a clear name such as your last "
    "name plus the word resume, then look for an upload or browse button on "
    "the application page, select the file, and wait for the confirmation "
    "message. Our career corner has [templates|examples] and a printable "
    "checklist, and staff can sit with you at a computer if anything is "
    "unclear.\n\n"
    "[Best wishes|Kind regards|All the best],\n"
    "[The Reference Desk|The Library Team]",

    "Happy to explain the process step by step. Start by saving your resume "
    "as a PDF, since that format keeps fonts and margins [stable|intact] on "
    "any computer. On the application website, click the button labeled "
    "upload, choose the file from your documents folder, and confirm that the "
    "preview shows the whole page. Some sites also let you paste plain text "
    "as a backup, which is worth doing. The library offers free resume review "
    "sessions [most Tuesdays|on weekday evenings], and our databases include "
    "sample resumes for dozens of fields.\n\n"
    "[Best wishes|Kind regards|All the best],\n"
    "[The Reference Desk|The Library Team]",

    "Great question, and the library can help at every step. Word-processor "
    "files are widely accepted, but a PDF avoids formatting "
    "[surprises|issues], and every public computer here can export one from "
    "the file menu. Keep the file size under a couple of megabytes, use your "
    "name in the filename, and upload it through the browse dialog on the "
    "application form. If the site reports an error, the usual "
    "[culprits|causes] are an unsupported format or an oversized file. Bring "
    "a USB drive and we will store a copy for future applications.\n\n"
    "[Best wishes|Kind regards|All the best],\n"
    "[The Reference Desk|The Library Team]",
};

const char* const kEmailRecoveryReplies[] = {
    "Locked mailboxes are [stressful|frustrating], so let us take it slowly "
    "and safely. Go straight to the provider's official sign-in page by "
    "typing the address yourself rather than clicking links, then choose the "
    "forgot password option. The provider will offer recovery through a "
    "backup email, a text message code, or security questions; pick the "
    "method you still [control|can reach]. Create a new password that is long "
    "and unique, and write it down somewhere safe at home. Be "
    "[wary|suspicious] of anyone who calls or emails offering to fix your "
    "account for a fee, because legitimate providers never do that.\n\n"
    "[Best wishes|Kind regards|All the best],\n"
    "[The Reference Desk|The Library Team]",

    "We can certainly help you regain access safely. Use the official "
    "recovery page of your email provider, never a link from a message, and "
    "follow the prompts to confirm your identity with a code sent to your "
    "phone or backup address. If those options fail, the provider's help "
    "center lists an account recovery form that asks about past passwords and "
    "contacts; answer what you can and [submit|send] it. Afterwards, turn on "
    "two-step verification so a stolen password alone cannot lock you out "
    "again. The library's security workshop covers [phishing|scam] warning "
    "signs with real examples.\n\n"
    "[Best wishes|Kind regards|All the best],\n"
    "[The Reference Desk|The Library Team]",

    "Sorry to hear about the lockout; it happens to [many|plenty of] patrons "
    "and is usually fixable. On a library computer, open the provider's "
    "genuine website, click forgot password, and work through the "
    "verification prompts at your own pace. Decline any offer of remote "
    "assistance from strangers, and never share a verification code with "
    "another person, because scammers [harvest|collect] codes that way. Once "
    "you are back in, update the recovery phone number, review recent sign-in "
    "activity, and sign out of devices you do not recognize. Staff at the "
    "reference desk can sit with you while you work through it.\n\n"
    "[Best wishes|Kind regards|All the best],\n"
    "[The Reference Desk|The Library Team]",
};

ReplyPool make_builtin_pool() {
  ReplyPool pool;
  auto fill = [&](TemplateId id, const char* const* bodies, std::size_t n) {
    auto& v = pool.variants[static_cast<int>(id)];
    v.assign(bodies, bodies + n);
  };
  fill(TemplateId::subject, kSubjectReplies, std::size(kSubjectReplies));
  fill(TemplateId::sports, kSportsReplies, std::size(kSportsReplies));
  fill(TemplateId::population, kPopulationReplies, std::size(kPopulationReplies));
  fill(TemplateId::print_sign_scan, kPrintSignScanReplies,
       std::size(kPrintSignScanReplies));
  fill(TemplateId::resume_upload, kResumeUploadReplies,
       std::size(kResumeUploadReplies));
  fill(TemplateId::email_recovery, kEmailRecoveryReplies,
       std::size(kEmailRecoveryReplies));
  return pool;
}

}  // namespace

const ReplyPool& builtin_reply_pool() {
  static const ReplyPool pool = make_builtin_pool();
  return pool;
}

std::string render_reply(const std::string& variant_body, RngEngine& rng) {
  std::string out;
  out.reserve(variant_body.size());
  for (std::size_t i = 0; i < variant_body.size(); ++i) {
    if (variant_body[i] != '[') {
      out.push_back(variant_body[i]);
      continue;
    }
    const std::size_t end = variant_body.find(']', i + 1);
    if (end == std::string::npos)
      throw std::invalid_argument("render_reply: unterminated choice group");
    std::vector<std::string> options;
    std::size_t start = i + 1;
    for (std::size_t j = i + 1; j <= end; ++j) {
      if (j == end || variant_body[j] == '|') {
        options.push_back(variant_body.substr(start, j - start));
        start = j + 1;
      }
    }
    out += options[uniform_index(rng, options.size())];
    i = end;
  }
  return out;
}

}  // namespace refaudit
