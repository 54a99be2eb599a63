package com.shop;

public class Text {
    static String heading(String title) {
        String head = title.trim();
        head = head.toUpperCase();
        return head;
    }
}
