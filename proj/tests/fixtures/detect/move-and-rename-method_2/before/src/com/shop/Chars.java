package com.shop;

public class Chars {
}
